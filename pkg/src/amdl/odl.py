"""Full-batch alternating minimization for orthogonal dictionary learning.

Each step hard-thresholds ``D^T Y`` to get the code and replaces ``D`` by the
polar factor of ``Y X^T`` (the exact Procrustes minimizer). A warm-up stage
with a geometrically shrinking threshold supplies an initial dictionary when
none is available.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from amdl.errors import AmdlError, SolverError
from amdl.gen_model import GroundTruth
from amdl.linalg_core import hard_threshold, polar
from amdl.trace import OnRecord, Recorder, TraceRecord

@dataclass(frozen=True)
class WarmupOptions:
    zeta0: float | None = None  # None: 1.01 * max|Y|
    beta: float = 0.98
    max_warmup_iters: int = 200

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.zeta0 is not None and self.zeta0 <= 0:
            raise ValueError("zeta0 must be positive")


@dataclass(frozen=True)
class OdlOptions:
    zeta: float
    max_iters: int = 100
    stop_tol: float = 1e-12
    warmup: WarmupOptions | None = None

    def __post_init__(self):
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass
class OdlResult:
    dictionary: np.ndarray
    code: np.ndarray
    traces: list[TraceRecord] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


@dataclass
class WarmupResult:
    dictionary: np.ndarray
    thresholds: list[float]
    traces: list[TraceRecord] = field(default_factory=list)


def odl_step(y: np.ndarray, d: np.ndarray, zeta: float) -> tuple[np.ndarray, np.ndarray]:
    """One alternating-minimization step: ``X = HT(D^T Y)``, ``D' = Polar(Y X^T)``."""
    x = hard_threshold(d.T @ y, zeta)
    return x, polar(y @ x.T)


def run_odl(
    y: np.ndarray,
    d0: np.ndarray,
    opts: OdlOptions,
    truth: GroundTruth | None = None,
    on_record: OnRecord | None = None,
    *,
    first_iter: int = 0,
) -> OdlResult:
    """Iterate ``odl_step`` until ``max_iters`` or the step size drops below ``stop_tol``.

    Record ``t`` describes the dictionary ``D^(t)`` entering step ``t`` and the
    code ``X^(t)`` it produces. The returned dictionary is the last update.

    Raises:
        SolverError: wrapping the numerical failure and its iteration index.
    """
    y = np.asarray(y, dtype=np.float64)
    d = np.asarray(d0, dtype=np.float64)
    rec = Recorder(truth, on_record)
    x = None
    converged = False
    steps = 0
    for t in range(opts.max_iters):
        try:
            x, d_next = odl_step(y, d, opts.zeta)
        except AmdlError as exc:
            raise SolverError(first_iter + t, exc) from exc
        step = float(np.linalg.norm(d_next - d))
        rec.record(first_iter + t, d, x, step_norm=step)
        d = d_next
        steps = t + 1
        if step < opts.stop_tol:
            converged = True
            break
    return OdlResult(d, x, rec.records, converged, steps)


def warmup_thresholds(zeta0: float, beta: float, count: int) -> list[float]:
    return [zeta0 * beta**t for t in range(count)]


def warmup(
    y: np.ndarray,
    opts: OdlOptions,
    truth: GroundTruth | None = None,
    on_record: OnRecord | None = None,
) -> WarmupResult:
    """Diminishing-threshold warm-up starting from the identity.

    Step ``t`` codes with threshold ``zeta0 * beta**t``; an all-zero code resets
    the dictionary to the identity, otherwise the dictionary becomes the
    Procrustes solution for that code. Stops once the threshold has reached
    the main-phase ``zeta`` or after ``max_warmup_iters`` steps.
    """
    if opts.warmup is None:
        raise ValueError("warm-up options are missing")
    w = opts.warmup
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    zeta0 = w.zeta0 if w.zeta0 is not None else 1.01 * float(np.max(np.abs(y)))
    d = np.eye(n)
    rec = Recorder(truth, on_record)
    used = []
    for t in range(w.max_warmup_iters):
        zeta_t = zeta0 * w.beta**t
        if zeta_t <= opts.zeta:
            break
        used.append(zeta_t)
        x = hard_threshold(d.T @ y, zeta_t)
        d_next = polar(y @ x.T, check_rank=False) if np.any(x) else np.eye(n)
        rec.record(t, d, x, step_norm=float(np.linalg.norm(d_next - d)))
        d = d_next
    return WarmupResult(d, used, rec.records)


def run_odl_with_warmup(
    y: np.ndarray,
    opts: OdlOptions,
    truth: GroundTruth | None = None,
    on_record: OnRecord | None = None,
) -> tuple[WarmupResult, OdlResult]:
    """Warm-up followed by the main phase; trace iteration numbers run on continuously."""
    wres = warmup(y, opts, truth, on_record)
    res = run_odl(y, wres.dictionary, opts, truth, on_record, first_iter=len(wres.traces))
    return wres, res
