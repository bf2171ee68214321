"""Dense linear-algebra kernels used by every solver.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Cholesky
factors are stored lower-triangular; callers that need the upper-triangular
preconditioner take the transpose at the point of use.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from amdl.errors import DowndateLostPD, NotPositiveDefinite, RankDeficient

RANK_TOL = 1e-12
PD_TOL = 1e-12
CHOL_TOL = 1e-10
ORTHO_TOL = 1e-10
SYM_TOL = 1e-10


def as_matrix(a, *, square: bool = False) -> np.ndarray:
    """Convert ``a`` to a finite 2-D float64 array, raising ``ValueError`` otherwise."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or Inf")
    if square and m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def hard_threshold(a, zeta: float) -> np.ndarray:
    """Zero every entry with magnitude strictly below ``zeta``.

    Entries with ``|a_ij| == zeta`` are kept.
    """
    if zeta < 0:
        raise ValueError("zeta must be nonnegative")
    a = np.asarray(a, dtype=np.float64)
    return np.where(np.abs(a) >= zeta, a, 0.0)


def polar(a, rank_tol: float = RANK_TOL, *, check_rank: bool = True) -> np.ndarray:
    """Orthogonal polar factor ``U V^T`` of a square full-rank matrix.

    This is the solution of the orthogonal Procrustes problem
    ``argmax_{Q orthogonal} trace(Q^T a)``. With ``check_rank=False`` a
    rank-deficient input returns one (non-unique) maximizer instead of raising.

    Raises:
        RankDeficient: if ``sigma_min(a) <= rank_tol * sigma_max(a)``.
    """
    a = as_matrix(a, square=True)
    u, s, vt = np.linalg.svd(a)
    if check_rank and (s[0] == 0.0 or s[-1] <= rank_tol * s[0]):
        raise RankDeficient(
            f"polar factor undefined: singular values {s[0]:.3e} .. {s[-1]:.3e}"
        )
    return u @ vt


def cholesky(a, pd_tol: float = PD_TOL) -> np.ndarray:
    """Lower-triangular Cholesky factor ``L`` with ``L L^T = a``.

    Raises:
        NotPositiveDefinite: if a pivot ``L_jj^2`` falls below
            ``pd_tol * max(diag(a))``.
    """
    a = as_matrix(a, square=True)
    scale = max(np.max(np.abs(a)), np.finfo(float).tiny)
    if np.max(np.abs(a - a.T)) > SYM_TOL * scale:
        raise ValueError("cholesky input is not symmetric")
    try:
        low = scipy.linalg.cholesky(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    floor = pd_tol * max(np.max(np.diag(a)), 0.0)
    pivots = np.diag(low) ** 2
    if not np.all(pivots > floor):
        j = int(np.argmin(pivots))
        raise NotPositiveDefinite(f"pivot {j} is {pivots[j]:.3e} (floor {floor:.3e})")
    return low


def spd_inverse(a) -> np.ndarray:
    """Inverse of an SPD matrix via its Cholesky factor and triangular solves."""
    low = cholesky(a)
    n = low.shape[0]
    inv = scipy.linalg.cho_solve((low, True), np.eye(n), check_finite=False)
    return 0.5 * (inv + inv.T)


def sherman_morrison_update(a_inv, y) -> tuple[np.ndarray, np.ndarray]:
    """Rank-one update of an inverse Gram matrix after absorbing sample ``y``.

    Given ``a_inv = G^{-1}``, returns ``((G + y y^T)^{-1}, v)`` where the new
    inverse equals ``a_inv - v v^T`` and
    ``v = a_inv y / sqrt(1 + y^T a_inv y)``. Costs O(n^2).
    """
    a_inv = np.asarray(a_inv, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    ay = a_inv @ y
    v = ay / np.sqrt(1.0 + y @ ay)
    return a_inv - np.outer(v, v), v


def chol_downdate(low, v) -> np.ndarray:
    """Lower factor ``L'`` with ``L' L'^T = L L^T - v v^T`` in O(n^2).

    Single pass over the columns of ``L`` (hyperbolic rotations), updating a
    working copy of ``v`` below the current pivot.

    Raises:
        DowndateLostPD: if some updated pivot would be the square root of a
            nonpositive number.
    """
    out = np.array(low, dtype=np.float64, copy=True)
    w = np.array(v, dtype=np.float64, copy=True).reshape(-1)
    n = out.shape[0]
    if out.shape != (n, n) or w.shape != (n,):
        raise ValueError("shape mismatch between factor and update vector")
    for j in range(n):
        ljj = out[j, j]
        r2 = ljj * ljj - w[j] * w[j]
        if not r2 > 0.0:
            raise DowndateLostPD(f"column {j}: pivot^2 would be {r2:.3e}")
        r = np.sqrt(r2)
        c = r / ljj
        s = w[j] / ljj
        out[j, j] = r
        if j + 1 < n:
            col = (out[j + 1 :, j] - s * w[j + 1 :]) / c
            w[j + 1 :] = c * w[j + 1 :] - s * col
            out[j + 1 :, j] = col
    return out


def orthogonality_defect(q) -> float:
    """``||Q^T Q - I||_F``."""
    q = np.asarray(q, dtype=np.float64)
    return float(np.linalg.norm(q.T @ q - np.eye(q.shape[1])))


def whitening_transform(a) -> np.ndarray:
    """Upper-triangular ``L((a a^T)^{-1})^T``; applied to ``a`` it yields an orthogonal matrix."""
    a = as_matrix(a, square=True)
    return cholesky(spd_inverse(a @ a.T)).T
