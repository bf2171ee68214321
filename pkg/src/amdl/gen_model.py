"""Seeded sampler for the sparse-code generative model.

Codes follow a Bernoulli(theta) support with zero-mean nonzeros bounded
below in magnitude by ``gamma``. Dictionaries are either Haar-orthogonal or
general complete matrices with unit spectral norm and a prescribed
condition number.

All randomness comes from ``numpy.random.Generator`` with the PCG64 bit
generator seeded from the caller's integer seed, which is stable across
platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from amdl.errors import RankDeficient
from amdl.linalg_core import polar

DictKind = Literal["orthogonal", "complete"]
ValueDist = Literal["rademacher", "sign_halfnormal"]


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for ``seed`` and an optional substream index tuple."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *stream])))


@dataclass(frozen=True)
class GenerativeParams:
    n: int
    p: int
    theta: float
    gamma: float = 1.0
    sigma: float | None = None
    kappa_hat: float = 1.0
    dict_kind: DictKind = "orthogonal"
    value_dist: ValueDist = "rademacher"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.sigma is None:
            object.__setattr__(self, "sigma", self.gamma)
        if self.value_dist == "rademacher" and not math.isclose(self.sigma, self.gamma):
            raise ValueError("rademacher codes require sigma == gamma")
        if self.value_dist == "sign_halfnormal" and self.sigma < self.gamma:
            raise ValueError("sign_halfnormal codes require sigma >= gamma")
        if self.value_dist not in ("rademacher", "sign_halfnormal"):
            raise ValueError(f"unknown value_dist {self.value_dist!r}")
        if self.dict_kind == "orthogonal":
            object.__setattr__(self, "kappa_hat", 1.0)
        elif self.dict_kind != "complete":
            raise ValueError(f"unknown dict_kind {self.dict_kind!r}")
        if self.kappa_hat < 1.0:
            raise ValueError("kappa_hat must be >= 1")

    @property
    def scale(self) -> float:
        """``p * theta * sigma^2``, the Gram normalisation of the preconditioner."""
        return self.p * self.theta * self.sigma**2


@dataclass(frozen=True)
class GroundTruth:
    dictionary: np.ndarray
    code: np.ndarray
    signals: np.ndarray

    @property
    def support(self) -> np.ndarray:
        """Boolean mask of the nonzero code entries."""
        return self.code != 0.0

    def support_pairs(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.code)
        return list(zip(rows.tolist(), cols.tolist()))


def sample_orthogonal_dictionary(n: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal ``n x n`` matrix (sign-corrected QR)."""
    if n < 1:
        raise ValueError("n must be positive")
    g = rng_for(seed, 1).standard_normal((n, n))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def sample_complete_dictionary(n: int, kappa_hat: float, seed: int) -> np.ndarray:
    """``U diag(s) V^T`` with Haar ``U, V`` and ``s`` log-spaced from 1 to ``1/kappa_hat``."""
    if kappa_hat < 1.0:
        raise ValueError("kappa_hat must be >= 1")
    u = sample_orthogonal_dictionary(n, seed)
    v = sample_orthogonal_dictionary(n, seed + 0x9E3779B9)
    s = np.logspace(0.0, -math.log10(kappa_hat), n) if n > 1 else np.ones(1)
    return (u * s) @ v.T


def _halfnormal_scale(gamma: float, sigma: float) -> float:
    # E(gamma + |Z|)^2 = sigma^2 for Z ~ N(0, s^2)
    c = math.sqrt(2.0 / math.pi)
    return -gamma * c + math.sqrt(gamma**2 * c**2 - gamma**2 + sigma**2)


def sample_code(params: GenerativeParams) -> np.ndarray:
    """Sparse ``n x p`` code matrix under the Bernoulli model."""
    rng = rng_for(params.seed, 2)
    shape = (params.n, params.p)
    support = rng.random(shape) < params.theta
    signs = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    if params.value_dist == "rademacher":
        mags = np.full(shape, params.gamma)
    else:
        s = _halfnormal_scale(params.gamma, params.sigma)
        mags = params.gamma + np.abs(rng.standard_normal(shape)) * s
    return np.where(support, signs * mags, 0.0)


def sample_ground_truth(params: GenerativeParams) -> GroundTruth:
    if params.dict_kind == "orthogonal":
        dictionary = sample_orthogonal_dictionary(params.n, params.seed)
    else:
        dictionary = sample_complete_dictionary(params.n, params.kappa_hat, params.seed)
    code = sample_code(params)
    return GroundTruth(dictionary=dictionary, code=code, signals=dictionary @ code)


def perturb_dictionary(
    d_star: np.ndarray,
    delta: float,
    kind: Literal["orthogonal", "general"],
    seed: int,
    *,
    max_retries: int = 5,
) -> np.ndarray:
    """Initial dictionary at (approximately) distance ``delta`` from ``d_star``.

    ``orthogonal``: ``polar(d_star + c E)`` with the scale ``c`` found by
    bisection so that the achieved distance is within 10% of ``delta``.
    ``general``: ``d_star + E`` with ``||E||_F = delta`` exactly.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    d_star = np.asarray(d_star, dtype=np.float64)
    if delta == 0:
        return d_star.copy()
    last_exc: Exception | None = None
    for attempt in range(max_retries):
        e = rng_for(seed, 3, attempt).standard_normal(d_star.shape)
        e /= np.linalg.norm(e)
        if kind == "general":
            return d_star + delta * e
        if kind != "orthogonal":
            raise ValueError(f"unknown perturbation kind {kind!r}")
        try:
            return _bisect_orthogonal(d_star, e, delta)
        except RankDeficient as exc:
            last_exc = exc
    raise RankDeficient(f"perturbation lost rank on {max_retries} attempts: {last_exc}")


def _bisect_orthogonal(d_star, e, delta):
    def dist(c):
        q = polar(d_star + c * e)
        return q, float(np.linalg.norm(q - d_star))

    lo, hi = 0.0, delta
    q, d = dist(hi)
    while d < delta:
        lo, hi = hi, 2.0 * hi
        q, d = dist(hi)
        if hi > 1e6 * max(delta, 1.0):
            raise RankDeficient("could not reach the requested distance")
    for _ in range(200):
        if abs(d - delta) <= 0.01 * delta:
            return q
        mid = 0.5 * (lo + hi)
        q, d = dist(mid)
        if d < delta:
            lo = mid
        else:
            hi = mid
    return q
