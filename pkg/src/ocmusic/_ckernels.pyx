# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ocmusic._pykernels for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    STEP_DIAG = 0
    STEP_ROW2 = 1
    STEP_COL2 = 2
    FROM_ELEVATOR = 3
    ELEVATOR_STAY = 4
    ELEVATOR_PATH_END = 5

cdef enum:
    LZ_WINDOW = 4096
    LZ_MIN_MATCH = 3
    LZ_MAX_MATCH = 258
    LZ_MAX_CHAIN = 128
    LZ_HASH_BITS = 15


def accumulated_score(S_seg):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] S = np.ascontiguousarray(S_seg, dtype=np.float64)
    cdef Py_ssize_t N = S.shape[0]
    cdef Py_ssize_t M = S.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] D = np.full((N, M + 1), -np.inf)
    cdef cnp.ndarray[cnp.int8_t, ndim=2] B = np.full((N, M + 1), -1, dtype=np.int8)
    cdef Py_ssize_t n, m
    cdef double best, c
    cdef signed char code
    D[0, 0] = 0.0
    D[0, 1] = S[0, 0]
    B[0, 1] = FROM_ELEVATOR
    for n in range(1, N):
        if D[n - 1, M] > D[n - 1, 0]:
            D[n, 0] = D[n - 1, M]
            B[n, 0] = ELEVATOR_PATH_END
        else:
            D[n, 0] = D[n - 1, 0]
            B[n, 0] = ELEVATOR_STAY
        D[n, 1] = D[n, 0] + S[n, 0]
        B[n, 1] = FROM_ELEVATOR
        for m in range(2, M + 1):
            best = D[n - 1, m - 1]
            code = STEP_DIAG
            if n >= 2:
                c = D[n - 2, m - 1]
                if c > best:
                    best = c
                    code = STEP_ROW2
            if m >= 3:
                c = D[n - 1, m - 2]
                if c > best:
                    best = c
                    code = STEP_COL2
            D[n, m] = S[n, m - 1] + best
            B[n, m] = code
    return D, B


cdef inline int _hash3(unsigned char a, unsigned char b, unsigned char c) nogil:
    return ((a << 10) ^ (b << 5) ^ c) & ((1 << LZ_HASH_BITS) - 1)


cdef struct BitWriter:
    unsigned char* buf
    Py_ssize_t pos
    unsigned long long acc
    int nbits


cdef inline void _write(BitWriter* w, unsigned int value, int width) nogil:
    w.acc = (w.acc << width) | value
    w.nbits += width
    while w.nbits >= 8:
        w.nbits -= 8
        w.buf[w.pos] = (w.acc >> w.nbits) & 0xFF
        w.pos += 1
    w.acc &= (1ULL << w.nbits) - 1


def lzss_compress(data):
    cdef bytes raw = bytes(data)
    cdef const unsigned char* src = raw
    cdef Py_ssize_t n = len(raw)
    cdef Py_ssize_t cap = (n * 9) // 8 + 16
    cdef int* head = <int*> malloc((1 << LZ_HASH_BITS) * sizeof(int))
    cdef int* prev = <int*> malloc((n + 1) * sizeof(int))
    cdef BitWriter w
    w.buf = <unsigned char*> malloc(cap)
    w.pos = 0
    w.acc = 0
    w.nbits = 0
    if head == NULL or prev == NULL or w.buf == NULL:
        free(head)
        free(prev)
        free(w.buf)
        raise MemoryError()
    cdef Py_ssize_t i, j, p, length, max_len, best_len, best_dist
    cdef int chain, h
    try:
        for i in range(1 << LZ_HASH_BITS):
            head[i] = -1
        _write(&w, (n >> 24) & 0xFF, 8)
        _write(&w, (n >> 16) & 0xFF, 8)
        _write(&w, (n >> 8) & 0xFF, 8)
        _write(&w, n & 0xFF, 8)
        with nogil:
            i = 0
            while i < n:
                best_len = 0
                best_dist = 0
                if i + LZ_MIN_MATCH <= n:
                    max_len = n - i
                    if max_len > LZ_MAX_MATCH:
                        max_len = LZ_MAX_MATCH
                    j = head[_hash3(src[i], src[i + 1], src[i + 2])]
                    chain = 0
                    while j >= 0 and i - j <= LZ_WINDOW and chain < LZ_MAX_CHAIN:
                        length = 0
                        while length < max_len and src[j + length] == src[i + length]:
                            length += 1
                        if length > best_len:
                            best_len = length
                            best_dist = i - j
                            if length == max_len:
                                break
                        j = prev[j]
                        chain += 1
                if best_len >= LZ_MIN_MATCH:
                    _write(&w, 1, 1)
                    _write(&w, best_dist - 1, 12)
                    _write(&w, best_len - LZ_MIN_MATCH, 8)
                    for p in range(i, i + best_len):
                        if p + LZ_MIN_MATCH <= n:
                            h = _hash3(src[p], src[p + 1], src[p + 2])
                            prev[p] = head[h]
                            head[h] = p
                    i += best_len
                else:
                    _write(&w, src[i], 9)
                    if i + LZ_MIN_MATCH <= n:
                        h = _hash3(src[i], src[i + 1], src[i + 2])
                        prev[i] = head[h]
                        head[h] = i
                    i += 1
            if w.nbits:
                w.buf[w.pos] = (w.acc << (8 - w.nbits)) & 0xFF
                w.pos += 1
        return w.buf[:w.pos]
    finally:
        free(head)
        free(prev)
        free(w.buf)
