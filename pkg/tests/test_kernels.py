import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ocmusic import _pykernels, kernels

BACKENDS = kernels.backends()


def test_compiled_backend_built():
    # the editable install builds the extension; the fallback still works alone
    assert "python" in BACKENDS
    assert kernels.BACKEND in BACKENDS


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("data", [b"", b"a", b"abc" * 100, bytes(4096), bytes(range(256)) * 20])
def test_lzss_round_trip(name, data):
    blob = BACKENDS[name].lzss_compress(data)
    assert kernels.lzss_decompress(blob) == data
    assert int.from_bytes(blob[:4], "big") == len(data)


@given(st.binary(max_size=3000))
def test_lzss_backends_agree(data):
    outs = {BACKENDS[n].lzss_compress(data) for n in BACKENDS}
    assert len(outs) == 1
    assert kernels.lzss_decompress(outs.pop()) == data


def test_lzss_literal_cost():
    # 3 distinct bytes cannot match: three 9-bit literals → 27 bits → 4 bytes
    assert len(_pykernels.lzss_compress(b"xyz")) == 4 + 4


@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 8)), elements=st.floats(-2, 1)))
def test_accumulation_backends_agree(S):
    results = [BACKENDS[n].accumulated_score(S) for n in sorted(BACKENDS)]
    D0, B0 = results[0]
    for D, B in results[1:]:
        np.testing.assert_array_equal(D, D0)
        np.testing.assert_array_equal(B, B0)


@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 6)), elements=st.floats(-2, 1)))
def test_backtracked_paths_reproduce_score(S):
    score, paths = kernels.backtrack(*kernels.accumulated_score(S))
    M = S.shape[1]
    assert score == pytest.approx(sum(S[r, c] for p in paths for r, c in p), abs=1e-9)
    prev_end = -1
    for p in paths:
        assert p[0][1] == 0 and p[-1][1] == M - 1
        assert p[0][0] > prev_end
        prev_end = p[-1][0]
        for (r0, c0), (r1, c1) in zip(p, p[1:]):
            assert (r1 - r0, c1 - c0) in {(1, 1), (2, 1), (1, 2)}
    assert score >= 0.0  # the empty family is always available
