"""Online complete dictionary learning over a signal stream.

The preconditioner absorbs every arriving sample through an O(n^2)
Sherman-Morrison update of ``(YY^T)^{-1}`` followed by a triangular rank-one
downdate of its Cholesky factor, while the coding window slides over the
most recent ``p2`` samples.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass, field, replace
from typing import BinaryIO, Iterable, Iterator

import numpy as np
import scipy.linalg

from amdl import linalg_core as lc
from amdl.cdl import project_init
from amdl.errors import AmdlError, DowndateLostPD, FormatError, SolverError, StreamExhausted
from amdl.gen_model import GroundTruth
from amdl.trace import OnRecord, Recorder, TraceRecord

DRIFT_TOL = 1e-6


@dataclass(frozen=True)
class PreconditionerState:
    gram: np.ndarray
    z_inv: np.ndarray
    l_factor: np.ndarray
    count: int
    theta_sigma2: float

    @property
    def p_mat(self) -> np.ndarray:
        """The upper-triangular preconditioner ``L(count * theta_sigma2 * z_inv)^T``."""
        return self.l_factor.T

    def drift(self) -> tuple[float, float]:
        """Relative residuals of the two state invariants."""
        n = self.gram.shape[0]
        inv_res = np.linalg.norm(self.z_inv @ self.gram - np.eye(n)) / math.sqrt(n)
        target = self.count * self.theta_sigma2 * self.z_inv
        fac_res = np.linalg.norm(self.l_factor @ self.l_factor.T - target) / np.linalg.norm(target)
        return float(inv_res), float(fac_res)


def init_state(y_init: np.ndarray, theta_sigma2: float) -> PreconditionerState:
    """State built from ``p1`` initial samples (the columns of ``y_init``)."""
    if theta_sigma2 <= 0:
        raise ValueError("theta_sigma2 must be positive")
    y_init = np.asarray(y_init, dtype=np.float64)
    p1 = y_init.shape[1]
    gram = y_init @ y_init.T
    z_inv = lc.spd_inverse(gram)
    l_factor = lc.cholesky(p1 * theta_sigma2 * z_inv)
    return PreconditionerState(gram, z_inv, l_factor, p1, theta_sigma2)


def update_preconditioner(state: PreconditionerState, y) -> PreconditionerState:
    """Absorb one sample in O(n^2).

    Raises:
        DowndateLostPD: on numerical loss of definiteness; callers refresh
            and retry.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    z_inv, v = lc.sherman_morrison_update(state.z_inv, y)
    old = math.sqrt(state.count * state.theta_sigma2)
    new = math.sqrt((state.count + 1) * state.theta_sigma2)
    low = lc.chol_downdate(state.l_factor / old, v) * new
    return PreconditionerState(
        state.gram + np.outer(y, y), z_inv, low, state.count + 1, state.theta_sigma2
    )


def refresh_state(state: PreconditionerState) -> PreconditionerState:
    """Recompute the inverse and factor from the maintained Gram matrix."""
    z_inv = lc.spd_inverse(state.gram)
    l_factor = lc.cholesky(state.count * state.theta_sigma2 * z_inv)
    return replace(state, z_inv=z_inv, l_factor=l_factor)


class SignalWindow:
    """Fixed-capacity ring buffer of column vectors, oldest first."""

    def __init__(self, n: int, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self._buf = np.zeros((n, capacity))
        self._ids = np.zeros(capacity, dtype=np.int64)
        self._head = 0
        self._size = 0
        self.capacity = capacity

    def __len__(self) -> int:
        return self._size

    def push(self, vec: np.ndarray, index: int = -1) -> None:
        """Append ``vec``; once full, the oldest column is evicted."""
        if self._size < self.capacity:
            pos = (self._head + self._size) % self.capacity
            self._size += 1
        else:
            pos = self._head
            self._head = (self._head + 1) % self.capacity
        self._buf[:, pos] = vec
        self._ids[pos] = index

    def _order(self) -> np.ndarray:
        return (self._head + np.arange(self._size)) % self.capacity

    def matrix(self) -> np.ndarray:
        return self._buf[:, self._order()]

    def indices(self) -> np.ndarray:
        """Stream positions of the buffered columns, oldest first."""
        return self._ids[self._order()]


def matrix_stream(y: np.ndarray) -> Iterator[np.ndarray]:
    """Yield the columns of ``y`` in order."""
    y = np.asarray(y, dtype=np.float64)
    for j in range(y.shape[1]):
        yield y[:, j].copy()


_LEN = struct.Struct("<I")


def write_stream(fh: BinaryIO, vectors: Iterable[np.ndarray]) -> None:
    """Write records of ``uint32 n`` followed by ``n`` float64 values, little-endian."""
    for vec in vectors:
        vec = np.ascontiguousarray(vec, dtype="<f8").reshape(-1)
        fh.write(_LEN.pack(vec.size))
        fh.write(vec.tobytes())


def read_stream(fh: BinaryIO, n: int | None = None) -> Iterator[np.ndarray]:
    """Parse records written by :func:`write_stream` until a clean end of file."""
    while True:
        head = fh.read(_LEN.size)
        if not head:
            return
        if len(head) < _LEN.size:
            raise FormatError("truncated record header")
        (count,) = _LEN.unpack(head)
        if n is not None and count != n:
            raise FormatError(f"record of dimension {count}, expected {n}")
        body = fh.read(8 * count)
        if len(body) < 8 * count:
            raise FormatError("truncated record body")
        n = count
        yield np.frombuffer(body, dtype="<f8").astype(np.float64)


@dataclass(frozen=True)
class OnlineOptions:
    zeta: float
    p1: int
    p2: int
    max_iters: int
    theta_sigma2: float | None = None  # None: average energy of the p1 initial samples
    refresh_every: int | None = None

    def __post_init__(self):
        if self.zeta <= 0 or (self.theta_sigma2 is not None and self.theta_sigma2 <= 0):
            raise ValueError("zeta and theta_sigma2 must be positive")
        if min(self.p1, self.p2, self.max_iters) < 1:
            raise ValueError("p1, p2 and max_iters must be positive")
        if self.refresh_every is not None and self.refresh_every < 1:
            raise ValueError("refresh_every must be positive")


@dataclass
class OnlineResult:
    dictionary: np.ndarray
    state: PreconditionerState
    orthogonal_dictionary: np.ndarray
    traces: list[TraceRecord] = field(default_factory=list)
    iterations: int = 0


def _take(it: Iterator[np.ndarray], count: int, what: str) -> list[np.ndarray]:
    out = []
    for _ in range(count):
        try:
            out.append(np.asarray(next(it), dtype=np.float64).reshape(-1))
        except StopIteration:
            raise StreamExhausted(f"stream ended after {len(out)} of {count} {what} vectors") from None
    return out


def _absorb(state: PreconditionerState, y: np.ndarray) -> PreconditionerState:
    try:
        return update_preconditioner(state, y)
    except DowndateLostPD:
        return update_preconditioner(refresh_state(state), y)


def run_online(
    stream: Iterable[np.ndarray],
    a0: np.ndarray,
    opts: OnlineOptions,
    truth: GroundTruth | None = None,
    on_record: OnRecord | None = None,
) -> OnlineResult:
    """Online alternating minimization.

    The first ``p1`` vectors initialize the preconditioner, the next ``p2``
    fill the window, then each arrival performs one update. Record ``t``
    scores ``A^(t) = (P^(t))^{-1} D^(t+1)``; the returned dictionary is the
    last of these.
    """
    it = iter(stream)
    start = time.perf_counter()
    try:
        y_init = np.column_stack(_take(it, opts.p1, "initialization"))
        ts2 = opts.theta_sigma2
        if ts2 is None:
            ts2 = float(np.sum(y_init * y_init)) / y_init.size
        state = init_state(y_init, ts2)
        d = project_init(a0)
    except StreamExhausted:
        raise
    except AmdlError as exc:
        raise SolverError(0, exc) from exc
    n = state.gram.shape[0]
    window = SignalWindow(n, opts.p2)
    for k, vec in enumerate(_take(it, opts.p2, "window")):
        window.push(vec, opts.p1 + k)
    rec = Recorder(truth, on_record, start)
    offset = opts.p1 + opts.p2
    a = None
    for t in range(opts.max_iters):
        (y,) = _take(it, 1, "arrival")
        window.push(y, offset + t)
        try:
            state = _absorb(state, y)
            p_mat = state.p_mat
            y_tilde = p_mat @ window.matrix()
            x = lc.hard_threshold(d.T @ y_tilde, opts.zeta)
            d_next = lc.polar(y_tilde @ x.T)
        except AmdlError as exc:
            raise SolverError(t, exc) from exc
        a = scipy.linalg.solve_triangular(p_mat, d_next, lower=False)
        step = float(np.linalg.norm(d_next - d))
        rec.record(t, a, x, step_norm=step, code_cols=window.indices() if truth is not None else None)
        d = d_next
        if opts.refresh_every is not None and (t + 1) % opts.refresh_every == 0:
            state = refresh_state(state)
    return OnlineResult(a, state, d, rec.records, opts.max_iters)
