"""Grayscale image tasks: PGM I/O, patch tiling, DCT baseline, inpainting.

Images are 2-D float64 arrays with intensities in ``[0, 1]``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from amdl.errors import AmdlError, DimensionMismatch, FormatError, NonDivisibleDimensions
from amdl.gen_model import rng_for
from amdl.sparse_coding import masked_omp, omp

PSNR_CAP_DB = 200.0


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping tiles, one flattened patch per column.

    Columns follow a row-major walk over the grid; each patch is flattened
    row-major.
    """

    patch_h: int
    patch_w: int
    grid_rows: int
    grid_cols: int
    patches: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid_rows * self.patch_h, self.grid_cols * self.patch_w


def extract_patches(img: np.ndarray, patch_h: int, patch_w: int) -> PatchGrid:
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if patch_h < 1 or patch_w < 1 or h % patch_h or w % patch_w:
        raise NonDivisibleDimensions(f"{h}x{w} image does not tile into {patch_h}x{patch_w} patches")
    gr, gc = h // patch_h, w // patch_w
    tiles = img.reshape(gr, patch_h, gc, patch_w).transpose(0, 2, 1, 3)
    return PatchGrid(patch_h, patch_w, gr, gc, tiles.reshape(gr * gc, patch_h * patch_w).T.copy())


def assemble_patches(grid: PatchGrid) -> np.ndarray:
    """Inverse of :func:`extract_patches`, clamped to ``[0, 1]``."""
    tiles = grid.patches.T.reshape(grid.grid_rows, grid.grid_cols, grid.patch_h, grid.patch_w)
    img = tiles.transpose(0, 2, 1, 3).reshape(grid.shape)
    return np.clip(img, 0.0, 1.0)


def dct_dictionary(patch_h: int, patch_w: int) -> np.ndarray:
    """Orthonormal 2-D DCT-II basis; column ``u * patch_w + v`` is the separable atom ``(u, v)``."""
    if patch_h < 1 or patch_w < 1:
        raise ValueError("patch dimensions must be positive")
    return np.kron(_dct_1d(patch_h), _dct_1d(patch_w))


def _dct_1d(m: int) -> np.ndarray:
    i = np.arange(m)[:, None]
    k = np.arange(m)[None, :]
    basis = np.cos(np.pi * (2 * i + 1) * k / (2 * m)) * math.sqrt(2.0 / m)
    basis[:, 0] = 1.0 / math.sqrt(m)
    return basis


def corrupt(img: np.ndarray, missing_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Zero a uniformly random subset of exactly ``round(fraction * size)`` pixels.

    Returns the corrupted image and the boolean mask of observed pixels.
    """
    if not 0.0 <= missing_fraction <= 1.0:
        raise ValueError("missing_fraction must lie in [0, 1]")
    img = np.asarray(img, dtype=np.float64)
    count = int(round(missing_fraction * img.size))
    drop = rng_for(seed, 11).choice(img.size, size=count, replace=False)
    mask = np.ones(img.size, dtype=bool)
    mask[drop] = False
    mask = mask.reshape(img.shape)
    return np.where(mask, img, 0.0), mask


def reconstruct(
    img: np.ndarray,
    dictionary: np.ndarray,
    k: int,
    patch_shape: tuple[int, int] | None = None,
    mask: np.ndarray | None = None,
    *,
    subtract_dc: bool = False,
    residual_tol: float = 1e-10,
) -> np.ndarray:
    """Code every patch with OMP (masked OMP when ``mask`` is given) and reassemble.

    With ``subtract_dc`` the mean of each patch (over observed pixels) is
    removed before coding and added back afterwards.
    """
    dictionary = np.asarray(dictionary, dtype=np.float64)
    if patch_shape is None:
        side = math.isqrt(dictionary.shape[0])
        if side * side != dictionary.shape[0]:
            raise DimensionMismatch("non-square atoms need an explicit patch_shape")
        patch_shape = (side, side)
    ph, pw = patch_shape
    if ph * pw != dictionary.shape[0]:
        raise DimensionMismatch(f"atoms of length {dictionary.shape[0]} do not fit {ph}x{pw} patches")
    grid = extract_patches(img, ph, pw)
    masks = extract_patches(mask.astype(np.float64), ph, pw).patches > 0.5 if mask is not None else None
    out = np.empty_like(grid.patches)
    for j in range(grid.patches.shape[1]):
        y = grid.patches[:, j]
        obs = masks[:, j] if masks is not None else None
        dc = 0.0
        if subtract_dc:
            dc = float(y[obs].mean()) if obs is not None and obs.any() else float(y.mean())
            y = y - dc
        try:
            if obs is None:
                code = omp(dictionary, y, k, residual_tol)
            elif obs.any():
                # patches with fewer observed pixels than k use every observation
                code = masked_omp(dictionary, y, obs, min(k, int(obs.sum())), residual_tol)
            else:
                code = None
        except AmdlError as exc:
            raise type(exc)(f"patch {j}: {exc}") from exc
        out[:, j] = dc if code is None else dc + dictionary @ code.to_dense()
    return assemble_patches(PatchGrid(ph, pw, grid.grid_rows, grid.grid_cols, out))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB for peak 1.0; identical images return the 200 dB cap."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


# --- PGM (P5) ---

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (8- or 16-bit) into ``[0, 1]`` floats."""
    data = Path(path).read_bytes()
    pos = 0
    tokens = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header") from None
    if not 0 < maxval < 65536 or width < 1 or height < 1:
        raise FormatError(f"{path}: unsupported PGM header values")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} pixel bytes, found {len(raw)}")
    pixels = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    return pixels.astype(np.float64) / maxval


def write_pgm(path: str | Path, img: np.ndarray, maxval: int = 255) -> None:
    """Write ``img`` (clamped to ``[0, 1]``) as a binary PGM."""
    if not 0 < maxval < 65536:
        raise ValueError("maxval must be in [1, 65535]")
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    h, w = img.shape
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    pixels = np.rint(img * maxval).astype(dtype)
    Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + pixels.tobytes())


def read_mask_pgm(path: str | Path) -> np.ndarray:
    """Observed-pixel mask stored as PGM: 0 = missing, maxval = observed."""
    return read_pgm(path) > 0.5


def write_mask_pgm(path: str | Path, mask: np.ndarray) -> None:
    write_pgm(path, np.asarray(mask, dtype=np.float64), maxval=255)


def sparse_patch_image(
    shape: tuple[int, int],
    patch_shape: tuple[int, int],
    atoms: int,
    seed: int,
    *,
    amplitude: float = 0.3,
) -> np.ndarray:
    """Synthetic image whose patches are ``atoms``-sparse in the DCT basis.

    Every patch uses the DC atom (mean 0.5) plus ``atoms - 1`` random AC atoms
    with coefficients of magnitude ``amplitude``; values stay inside
    ``[0, 1]`` for the default settings so no clamping occurs.
    """
    ph, pw = patch_shape
    h, w = shape
    dct = dct_dictionary(ph, pw)
    m = ph * pw
    rng = rng_for(seed, 13)
    grid_rows, grid_cols = h // ph, w // pw
    cols = np.empty((m, grid_rows * grid_cols))
    for j in range(cols.shape[1]):
        x = np.zeros(m)
        x[0] = 0.5 * math.sqrt(m)
        ac = rng.choice(np.arange(1, m), size=atoms - 1, replace=False)
        x[ac] = amplitude * np.where(rng.random(atoms - 1) < 0.5, -1.0, 1.0)
        cols[:, j] = dct @ x
    return assemble_patches(PatchGrid(ph, pw, grid_rows, grid_cols, cols))
