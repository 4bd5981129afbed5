"""Kernel matrices as CSV: a line holding ``n``, then ``n`` rows of ``n`` values.

Lines starting with ``#`` are comments.  Values are written with Python's
shortest round-trip float repr.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParseError


def format_kernel(M, comments: Sequence[str] = ()) -> str:
    M = np.asarray(M, dtype=np.float64)
    out = [f"# {c}" for c in comments]
    out.append(str(M.shape[0]))
    out.extend(",".join(repr(float(v)) for v in row) for row in M)
    return "\n".join(out) + "\n"


def parse_kernel(text: str, path: str | None = None) -> np.ndarray:
    rows: list[tuple[int, str]] = [(k + 1, ln.strip()) for k, ln in enumerate(text.splitlines())]
    rows = [(k, ln) for k, ln in rows if ln and not ln.startswith("#")]
    if not rows:
        raise ParseError("empty kernel file", 1, path)
    k, head = rows[0]
    try:
        n = int(head)
    except ValueError:
        raise ParseError(f"expected the matrix size on the first line, got {head!r}", k, path) from None
    if n < 0:
        raise ParseError("negative matrix size", k, path)
    if len(rows) - 1 != n:
        raise ParseError(f"expected {n} rows, found {len(rows) - 1}", rows[-1][0], path)
    M = np.empty((n, n))
    for i, (k, ln) in enumerate(rows[1:]):
        cells = ln.split(",")
        if len(cells) != n:
            raise ParseError(f"expected {n} values, found {len(cells)}", k, path)
        try:
            M[i] = [float(c) for c in cells]
        except ValueError as exc:
            raise ParseError(f"bad number ({exc})", k, path) from None
    if not np.all(np.isfinite(M)):
        raise ParseError("non-finite entry", None, path)
    return M


def read_kernel(path) -> np.ndarray:
    return parse_kernel(Path(path).read_text(), str(path))


def write_kernel(path, M, comments: Sequence[str] = ()) -> None:
    Path(path).write_text(format_kernel(M, comments))
