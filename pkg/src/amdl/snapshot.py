"""Binary dictionary snapshots.

Layout::

    DICTSNAP1\\n
    rows=<n>\\n
    cols=<k>\\n
    kind=<orthogonal|general>\\n
    \\n
    <rows*cols little-endian float64, row-major>
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from amdl.errors import FormatError

MAGIC = b"DICTSNAP1\n"
KINDS = ("orthogonal", "general")


def dumps(m: np.ndarray, kind: str = "general") -> bytes:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("snapshots hold 2-D matrices")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    header = f"rows={m.shape[0]}\ncols={m.shape[1]}\nkind={kind}\n\n".encode("ascii")
    return MAGIC + header + np.ascontiguousarray(m, dtype="<f8").tobytes()


def loads(data: bytes) -> tuple[np.ndarray, str]:
    if not data.startswith(MAGIC):
        raise FormatError("missing DICTSNAP1 magic")
    end = data.find(b"\n\n", len(MAGIC) - 1)
    if end < 0:
        raise FormatError("unterminated snapshot header")
    fields = {}
    for line in data[len(MAGIC) : end].decode("ascii").split("\n"):
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"bad header line {line!r}")
        fields[key] = value
    try:
        rows, cols, kind = int(fields["rows"]), int(fields["cols"]), fields["kind"]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"incomplete snapshot header: {exc}") from None
    if kind not in KINDS or rows < 1 or cols < 1:
        raise FormatError("invalid snapshot header values")
    body = data[end + 2 :]
    if len(body) != 8 * rows * cols:
        raise FormatError(f"expected {8 * rows * cols} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(rows, cols), kind


def write_snapshot(path: str | Path, m: np.ndarray, kind: str = "general") -> None:
    Path(path).write_bytes(dumps(m, kind))


def read_snapshot(path: str | Path) -> tuple[np.ndarray, str]:
    try:
        return loads(Path(path).read_bytes())
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None
