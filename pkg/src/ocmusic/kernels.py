"""Hot-loop kernels with a compiled backend and a pure-Python fallback.

The compiled extension ``ocmusic._ckernels`` is used when it imports;
setting ``OCMUSIC_PURE_PYTHON=1`` forces the fallback. Both backends share
the same semantics and produce identical results.
"""
from __future__ import annotations

import os

from . import _pykernels

_ckernels = None
if not os.environ.get("OCMUSIC_PURE_PYTHON"):
    try:
        from . import _ckernels  # type: ignore[attr-defined,no-redef]
    except ImportError:  # pragma: no cover - depends on the build
        _ckernels = None

BACKEND = "compiled" if _ckernels is not None else "python"

_impl = _ckernels if _ckernels is not None else _pykernels
accumulated_score = _impl.accumulated_score
lzss_compress = _impl.lzss_compress

STEP_DIAG = _pykernels.STEP_DIAG
STEP_ROW2 = _pykernels.STEP_ROW2
STEP_COL2 = _pykernels.STEP_COL2
FROM_ELEVATOR = _pykernels.FROM_ELEVATOR
ELEVATOR_STAY = _pykernels.ELEVATOR_STAY
ELEVATOR_PATH_END = _pykernels.ELEVATOR_PATH_END


def backends():
    """Return ``{name: module}`` for every importable backend."""
    found = {"python": _pykernels}
    if _ckernels is not None:
        found["compiled"] = _ckernels
    return found


def lzss_decompress(blob: bytes) -> bytes:
    """Invert :func:`lzss_compress` (used to check losslessness)."""
    n = int.from_bytes(blob[:4], "big")
    bits = int.from_bytes(blob[4:], "big")
    total = 8 * (len(blob) - 4)
    pos = 0

    def read(width: int) -> int:
        nonlocal pos
        value = (bits >> (total - pos - width)) & ((1 << width) - 1)
        pos += width
        return value

    out = bytearray()
    while len(out) < n:
        if read(1):
            dist = read(12) + 1
            length = read(8) + _pykernels.LZ_MIN_MATCH
            start = len(out) - dist
            for k in range(length):
                out.append(out[start + k])
        else:
            out.append(read(8))
    return bytes(out)


def backtrack(D, B):
    """Recover the optimal path family from an accumulation result.

    Returns
    -------
    score : float
    paths : list of list of (row, column) tuples, in time order
    """
    N, cols = D.shape
    M = cols - 1
    n = N - 1
    m = M if D[n, M] > D[n, 0] else 0
    score = float(D[n, m])
    paths = []
    current = []
    while True:
        if m == 0:
            if n == 0:
                break
            code = B[n, 0]
            n -= 1
            if code == ELEVATOR_PATH_END:
                m = M
            continue
        current.append((n, m - 1))
        if m == 1:
            paths.append(current[::-1])
            current = []
            m = 0
            continue
        code = B[n, m]
        if code == STEP_DIAG:
            n, m = n - 1, m - 1
        elif code == STEP_ROW2:
            n, m = n - 2, m - 1
        else:
            n, m = n - 1, m - 2
    return score, paths[::-1]
