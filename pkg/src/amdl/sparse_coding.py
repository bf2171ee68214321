"""Per-signal sparse coding: preconditioned hard thresholding and OMP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from amdl.errors import DegenerateSelection, InsufficientObservations
from amdl.linalg_core import hard_threshold

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class SparseCode:
    indices: np.ndarray
    values: np.ndarray
    dimension: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp)
        vals = np.asarray(self.values, dtype=np.float64)
        order = np.argsort(idx, kind="stable")
        idx, vals = idx[order], vals[order]
        if idx.shape != vals.shape:
            raise ValueError("indices and values must have the same length")
        if idx.size and (np.any(np.diff(idx) == 0) or idx[0] < 0 or idx[-1] >= self.dimension):
            raise ValueError("indices must be distinct and within the dictionary")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_dense(cls, x: np.ndarray) -> "SparseCode":
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        idx = np.flatnonzero(x)
        return cls(idx, x[idx], x.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dimension)
        out[self.indices] = self.values
        return out

    def __len__(self) -> int:
        return int(self.indices.size)


def code_with_preconditioner(a: np.ndarray, p_mat: np.ndarray, y: np.ndarray, zeta: float) -> SparseCode:
    """``HT_zeta((P a)^T (P y))`` as a sparse code."""
    pa = p_mat @ a
    py = p_mat @ np.asarray(y, dtype=np.float64).reshape(-1)
    return SparseCode.from_dense(hard_threshold(pa.T @ py, zeta))


def omp(
    dictionary: np.ndarray,
    y: np.ndarray,
    k: int,
    residual_tol: float = 1e-10,
    *,
    trace: list | None = None,
) -> SparseCode:
    """Orthogonal matching pursuit with at most ``k`` atoms.

    Atoms are normalized for selection only; coefficients are the
    least-squares fit against the original atoms. Stops early once the
    residual norm is at most ``residual_tol``. If ``trace`` is given, the
    residual after each re-solve is appended to it.

    Raises:
        DegenerateSelection: when the selected atoms are numerically dependent.
    """
    dictionary = np.asarray(dictionary, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    m, natoms = dictionary.shape
    if not 1 <= k <= natoms:
        raise ValueError(f"atom budget {k} outside [1, {natoms}]")
    norms = np.linalg.norm(dictionary, axis=0)
    if np.any(norms == 0):
        raise ValueError("dictionary has a zero atom")
    unit = dictionary / norms
    selected: list[int] = []
    coef = np.zeros(0)
    residual = y.copy()
    while len(selected) < k and np.linalg.norm(residual) > residual_tol:
        corr = np.abs(unit.T @ residual)
        corr[selected] = -1.0
        selected.append(int(np.argmax(corr)))
        sub = dictionary[:, selected]
        q, r = np.linalg.qr(sub)
        diag = np.abs(np.diag(r))
        if diag.min() <= diag.max() / _COND_LIMIT:
            raise DegenerateSelection(f"atom {selected[-1]} is dependent on {selected[:-1]}")
        coef = np.linalg.solve(r, q.T @ y)
        residual = y - sub @ coef
        if trace is not None:
            trace.append(residual.copy())
    return SparseCode(np.array(selected, dtype=np.intp), coef, natoms)


def masked_omp(
    dictionary: np.ndarray,
    y: np.ndarray,
    mask: np.ndarray,
    k: int,
    residual_tol: float = 1e-10,
) -> SparseCode:
    """OMP fitted on the observed rows only.

    Applying the returned code to the full dictionary fills in the unobserved
    entries.

    Raises:
        InsufficientObservations: if fewer than ``k`` entries are observed.
    """
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    observed = int(mask.sum())
    if observed < k:
        raise InsufficientObservations(f"{observed} observed entries for {k} atoms")
    dictionary = np.asarray(dictionary, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    sub = dictionary[mask]
    alive = np.linalg.norm(sub, axis=0) > 0
    if alive.all():
        return omp(sub, y[mask], k, residual_tol)
    # atoms that vanish on the observed rows cannot be selected
    cols = np.flatnonzero(alive)
    code = omp(sub[:, cols], y[mask], min(k, cols.size), residual_tol)
    return SparseCode(cols[code.indices], code.values, dictionary.shape[1])
