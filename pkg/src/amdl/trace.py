"""Per-iteration metrics shared by the solvers, and their CSV encoding."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, fields
from typing import IO, Callable, Iterable

import numpy as np
from scipy.optimize import linear_sum_assignment

BASE_COLUMNS = (
    "iter",
    "dict_err_fro",
    "dict_err_aligned",
    "code_err_fro",
    "support_mismatch",
    "contraction",
    "elapsed_ms",
    "step_norm",
    "code_err_norm",
)


@dataclass
class TraceRecord:
    """Metrics for one iteration; fields that cannot be computed stay ``None``."""

    iter: int
    dict_err_fro: float | None = None
    dict_err_aligned: float | None = None
    code_err_fro: float | None = None
    support_mismatch: int | None = None
    contraction: float | None = None
    elapsed_ms: float | None = None
    step_norm: float | None = None
    code_err_norm: float | None = None
    precond_err: float | None = None


@dataclass(frozen=True)
class Alignment:
    distance: float
    permutation: np.ndarray
    signs: np.ndarray

    def apply_to_dictionary(self, d: np.ndarray) -> np.ndarray:
        return d[:, self.permutation] * self.signs

    def apply_to_code(self, x: np.ndarray) -> np.ndarray:
        return x[self.permutation, :] * self.signs[:, None]


def aligned_distance(d: np.ndarray, d_star: np.ndarray) -> Alignment:
    """Smallest ``||d Pi S - d_star||_F`` over signed column permutations.

    Column ``permutation[j]`` of ``d``, multiplied by ``signs[j]``, is matched
    to column ``j`` of ``d_star``. Column norms do not depend on the matching,
    so the optimum maximizes the total ``|<d_i, d*_j>|``, which is solved
    exactly as a linear assignment problem.
    """
    d = np.asarray(d, dtype=np.float64)
    d_star = np.asarray(d_star, dtype=np.float64)
    if d.shape != d_star.shape:
        raise ValueError("dictionaries must have the same shape")
    g = d.T @ d_star
    rows, cols = linear_sum_assignment(-np.abs(g))
    perm = np.empty(d.shape[1], dtype=np.intp)
    perm[cols] = rows
    signs = np.sign(g[perm, np.arange(d.shape[1])])
    signs[signs == 0] = 1.0
    dist = float(np.linalg.norm(d[:, perm] * signs - d_star))
    return Alignment(dist, perm, signs)


def dictionary_metrics(d: np.ndarray, d_star: np.ndarray) -> tuple[float, Alignment]:
    return float(np.linalg.norm(d - d_star)), aligned_distance(d, d_star)


def code_metrics(
    x: np.ndarray, x_star: np.ndarray, alignment: Alignment | None = None
) -> tuple[float, float, int]:
    """Raw code error, code error normalized by ``||x_star||_2``, support mismatch.

    When ``alignment`` is a nontrivial signed permutation the rows of ``x`` are
    reordered first so that a dictionary recovered up to relabelling is scored
    against the matching rows of ``x_star``.
    """
    if alignment is not None and not _is_identity(alignment):
        x = alignment.apply_to_code(x)
    err = float(np.linalg.norm(x - x_star))
    spectral = float(np.linalg.norm(x_star, 2))
    norm = err / spectral if spectral > 0 else math.nan
    mismatch = int(np.count_nonzero((x != 0) ^ (x_star != 0)))
    return err, norm, mismatch


def _is_identity(a: Alignment) -> bool:
    return bool(np.all(a.permutation == np.arange(a.permutation.size)) and np.all(a.signs > 0))


def contraction(current: float | None, previous: float | None) -> float | None:
    if current is None or previous is None or previous == 0.0:
        return None
    return current / previous


OnRecord = Callable[[TraceRecord], None]


class Recorder:
    """Builds trace records against an optional ground truth."""

    def __init__(self, truth, on_record: OnRecord | None, start: float | None = None):
        self.truth = truth
        self.on_record = on_record
        self.start = time.perf_counter() if start is None else start
        self.prev_err: float | None = None
        self.records: list[TraceRecord] = []

    def record(self, it, d, x, step_norm=None, code_cols=None, **extra) -> TraceRecord:
        rec = TraceRecord(iter=it, step_norm=step_norm, **extra)
        if self.truth is not None:
            err, align = dictionary_metrics(d, self.truth.dictionary)
            rec.dict_err_fro = err
            rec.dict_err_aligned = align.distance
            rec.contraction = contraction(err, self.prev_err)
            self.prev_err = err
            if x is not None:
                x_star = self.truth.code if code_cols is None else self.truth.code[:, code_cols]
                rec.code_err_fro, rec.code_err_norm, rec.support_mismatch = code_metrics(
                    x, x_star, align
                )
        rec.elapsed_ms = (time.perf_counter() - self.start) * 1e3
        self.records.append(rec)
        if self.on_record is not None:
            self.on_record(rec)
        return rec


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class TraceWriter:
    """Append-only CSV writer that flushes after every row."""

    def __init__(self, fh: IO[str], extra: Iterable[str] = ()):
        self.columns = tuple(BASE_COLUMNS) + tuple(extra)
        self._fh = fh
        self._writer = csv.writer(fh, lineterminator="\n")
        self._writer.writerow(self.columns)
        fh.flush()

    def write(self, rec: TraceRecord) -> None:
        self._writer.writerow([_fmt(getattr(rec, c)) for c in self.columns])
        self._fh.flush()


TRACE_FIELDS = tuple(f.name for f in fields(TraceRecord))
