"""Pure-Python reference kernels.

These are the fallback implementations behind :mod:`ocmusic.kernels`. The
compiled module ``ocmusic._ckernels`` implements the same functions with the
same tie-breaking rules, so both backends produce identical outputs.
"""
from __future__ import annotations

import numpy as np

# Backpointer codes of the path-family accumulation matrix.
STEP_DIAG = 0  # from (n-1, m-1)
STEP_ROW2 = 1  # from (n-2, m-1)
STEP_COL2 = 2  # from (n-1, m-2)
FROM_ELEVATOR = 3  # column 1 entered from the elevator cell of the same row
ELEVATOR_STAY = 4  # elevator continues from (n-1, 0)
ELEVATOR_PATH_END = 5  # elevator entered from a finished path at (n-1, M)

LZ_WINDOW = 4096
LZ_MIN_MATCH = 3
LZ_MAX_MATCH = 258
LZ_MAX_CHAIN = 128
LZ_HASH_BITS = 15


def accumulated_score(S_seg):
    """Accumulated score matrix for an optimal path family.

    Parameters
    ----------
    S_seg : np.ndarray, shape (N, M)
        Columns of a (thresholded) self-similarity matrix restricted to a
        segment of length ``M``.

    Returns
    -------
    D : np.ndarray, shape (N, M + 1)
        Column 0 is the elevator column, column ``m`` holds the best score of
        a path family whose current path ends in cell ``(n, m - 1)``.
    B : np.ndarray of int8, shape (N, M + 1)
        Backpointer codes.
    """
    S_seg = np.ascontiguousarray(S_seg, dtype=np.float64)
    N, M = S_seg.shape
    D = np.full((N, M + 1), -np.inf)
    B = np.full((N, M + 1), -1, dtype=np.int8)
    D[0, 0] = 0.0
    D[0, 1] = S_seg[0, 0]
    B[0, 1] = FROM_ELEVATOR
    neg = np.full(max(M - 1, 0), -np.inf)
    for n in range(1, N):
        if D[n - 1, M] > D[n - 1, 0]:
            D[n, 0] = D[n - 1, M]
            B[n, 0] = ELEVATOR_PATH_END
        else:
            D[n, 0] = D[n - 1, 0]
            B[n, 0] = ELEVATOR_STAY
        D[n, 1] = D[n, 0] + S_seg[n, 0]
        B[n, 1] = FROM_ELEVATOR
        if M < 2:
            continue
        best = D[n - 1, 1:M].copy()
        code = np.zeros(M - 1, dtype=np.int8)
        if n >= 2:
            c1 = D[n - 2, 1:M]
            take = c1 > best
            best[take] = c1[take]
            code[take] = STEP_ROW2
        c2 = neg.copy()
        # paths must start in the first segment column, so (1, 2) never
        # leaves the elevator
        c2[1:] = D[n - 1, 1 : M - 1]
        take = c2 > best
        best[take] = c2[take]
        code[take] = STEP_COL2
        D[n, 2:] = S_seg[n, 1:] + best
        B[n, 2:] = code
    return D, B


def _hash3(a: int, b: int, c: int) -> int:
    return ((a << 10) ^ (b << 5) ^ c) & ((1 << LZ_HASH_BITS) - 1)


class _BitWriter:
    __slots__ = ("buf", "acc", "nbits")

    def __init__(self):
        self.buf = bytearray()
        self.acc = 0
        self.nbits = 0

    def write(self, value: int, width: int) -> None:
        self.acc = (self.acc << width) | value
        self.nbits += width
        while self.nbits >= 8:
            self.nbits -= 8
            self.buf.append((self.acc >> self.nbits) & 0xFF)
        self.acc &= (1 << self.nbits) - 1

    def getvalue(self) -> bytes:
        if self.nbits:
            self.buf.append((self.acc << (8 - self.nbits)) & 0xFF)
            self.acc = 0
            self.nbits = 0
        return bytes(self.buf)


def lzss_compress(data: bytes) -> bytes:
    """Greedy LZSS with hash chains.

    Stream layout: 4-byte big-endian original length, then MSB-first tokens.
    A literal is ``0`` followed by 8 bits; a match is ``1`` followed by a
    12-bit distance minus one and an 8-bit length minus three.
    """
    data = bytes(data)
    n = len(data)
    head = [-1] * (1 << LZ_HASH_BITS)
    prev = [-1] * n
    out = _BitWriter()
    for shift in (24, 16, 8, 0):
        out.write((n >> shift) & 0xFF, 8)

    def insert(p: int) -> None:
        if p + LZ_MIN_MATCH <= n:
            h = _hash3(data[p], data[p + 1], data[p + 2])
            prev[p] = head[h]
            head[h] = p

    i = 0
    while i < n:
        best_len = 0
        best_dist = 0
        if i + LZ_MIN_MATCH <= n:
            max_len = min(LZ_MAX_MATCH, n - i)
            j = head[_hash3(data[i], data[i + 1], data[i + 2])]
            chain = 0
            while j >= 0 and i - j <= LZ_WINDOW and chain < LZ_MAX_CHAIN:
                length = 0
                while length < max_len and data[j + length] == data[i + length]:
                    length += 1
                if length > best_len:
                    best_len = length
                    best_dist = i - j
                    if length == max_len:
                        break
                j = prev[j]
                chain += 1
        if best_len >= LZ_MIN_MATCH:
            out.write(1, 1)
            out.write(best_dist - 1, 12)
            out.write(best_len - LZ_MIN_MATCH, 8)
            for p in range(i, i + best_len):
                insert(p)
            i += best_len
        else:
            out.write(data[i], 9)
            insert(i)
            i += 1
    return out.getvalue()
