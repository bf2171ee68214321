"""Mini-batch complete dictionary learning with a Cholesky preconditioner.

The data are whitened once by ``P = L((YY^T / scale)^{-1})^T`` so that the
preconditioned signals ``P Y`` are (approximately) generated by an orthogonal
dictionary. Alternating minimization then runs on random column batches, and
the final dictionary is mapped back through ``P^{-1}``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from amdl.errors import AmdlError, SolverError
from amdl.gen_model import GroundTruth, rng_for
from amdl.linalg_core import cholesky, spd_inverse, whitening_transform
from amdl.odl import odl_step
from amdl.trace import OnRecord, Recorder, TraceRecord


@dataclass(frozen=True)
class CdlOptions:
    zeta: float
    batch_size: int
    scale: float
    max_iters: int = 50
    sampling_seed: int = 0
    stop_tol: float = 0.0

    def __post_init__(self):
        if self.zeta <= 0 or self.scale <= 0:
            raise ValueError("zeta and scale must be positive")
        if self.batch_size < 1 or self.max_iters < 1:
            raise ValueError("batch_size and max_iters must be positive")


@dataclass
class CdlResult:
    dictionary: np.ndarray
    preconditioner: np.ndarray
    orthogonal_dictionary: np.ndarray
    traces: list[TraceRecord] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


def build_preconditioner(y: np.ndarray, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(P, P @ y)`` with ``P`` upper-triangular.

    Raises:
        NotPositiveDefinite: when ``y y^T`` is singular.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    y = np.asarray(y, dtype=np.float64)
    gram = (y @ y.T) / scale
    p_mat = cholesky(spd_inverse(gram)).T
    return p_mat, p_mat @ y


def default_scale(y: np.ndarray) -> float:
    """``trace(Y Y^T) / n``: whitens to unit average energy when theta and sigma are unknown."""
    y = np.asarray(y, dtype=np.float64)
    return float(np.sum(y * y)) / y.shape[0]


def project_init(a0: np.ndarray) -> np.ndarray:
    """Orthogonal dictionary ``L((a0 a0^T)^{-1})^T a0`` associated with ``a0``."""
    return whitening_transform(a0) @ np.asarray(a0, dtype=np.float64)


def unprecondition(p_mat: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``P^{-1} D`` by triangular solve."""
    return scipy.linalg.solve_triangular(p_mat, d, lower=False)


def preconditioner_error(p_mat: np.ndarray, a_star: np.ndarray) -> float:
    """``||P A* - L((A*A*^T)^{-1})^T A*||_F``."""
    return float(np.linalg.norm(p_mat @ a_star - project_init(a_star)))


def sample_batch(p: int, batch_size: int, seed: int, iteration: int) -> np.ndarray:
    """Column indices for one iteration, drawn without replacement.

    A batch that covers every column returns them in order.
    """
    if batch_size > p:
        raise ValueError("batch_size exceeds the number of columns")
    if batch_size == p:
        return np.arange(p)
    return np.sort(rng_for(seed, 7, iteration).choice(p, size=batch_size, replace=False))


def run_cdl(
    y: np.ndarray,
    a0: np.ndarray,
    opts: CdlOptions,
    truth: GroundTruth | None = None,
    on_record: OnRecord | None = None,
) -> CdlResult:
    """Mini-batch alternating minimization on preconditioned data.

    Trace record ``t`` scores ``A^(t) = P^{-1} D^(t)`` against the true
    dictionary, and the batch code against the matching true code columns.
    """
    y = np.asarray(y, dtype=np.float64)
    start = time.perf_counter()
    try:
        p_mat, y_tilde = build_preconditioner(y, opts.scale)
        d = project_init(a0)
    except AmdlError as exc:
        raise SolverError(0, exc) from exc
    precond_err = preconditioner_error(p_mat, truth.dictionary) if truth is not None else None
    rec = Recorder(truth, on_record, start)
    p = y.shape[1]
    converged = False
    steps = 0
    for t in range(opts.max_iters):
        cols = sample_batch(p, opts.batch_size, opts.sampling_seed, t)
        try:
            x, d_next = odl_step(y_tilde[:, cols], d, opts.zeta)
        except AmdlError as exc:
            raise SolverError(t, exc) from exc
        step = float(np.linalg.norm(d_next - d))
        rec.record(t, unprecondition(p_mat, d), x, step_norm=step, code_cols=cols, precond_err=precond_err)
        d = d_next
        steps = t + 1
        if step < opts.stop_tol:
            converged = True
            break
    return CdlResult(unprecondition(p_mat, d), p_mat, d, rec.records, converged, steps)
