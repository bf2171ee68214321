"""Exception types raised across the package."""


class AmdlError(Exception):
    """Base class for all package errors."""


class RankDeficient(AmdlError):
    """A matrix that must be full rank is numerically singular."""


class NotPositiveDefinite(AmdlError):
    """A matrix that must be SPD has a pivot below tolerance."""


class DowndateLostPD(AmdlError):
    """A Cholesky downdate would take the square root of a nonpositive value."""


class StreamExhausted(AmdlError):
    """The signal stream ended before the requested number of vectors."""


class DegenerateSelection(AmdlError):
    """OMP selected a numerically dependent set of atoms."""


class InsufficientObservations(AmdlError):
    """Masked coding has fewer observed entries than the atom budget."""


class NonDivisibleDimensions(AmdlError):
    """Image dimensions are not an exact multiple of the patch size."""


class DimensionMismatch(AmdlError):
    """Two operands have incompatible shapes."""


class ConfigError(AmdlError):
    """Invalid experiment configuration."""


class FormatError(AmdlError):
    """Malformed file contents."""


class SolverError(AmdlError):
    """A numerical failure inside a solver loop, tagged with the iteration."""

    def __init__(self, iteration, cause):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"iteration {iteration}: {type(cause).__name__}: {cause}")
