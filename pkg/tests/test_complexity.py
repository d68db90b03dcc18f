import math
import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ocmusic import dsp
from ocmusic.errors import EmptyInputError, UndefinedFeatureError
from ocmusic.features import complexity as cx
from ocmusic.io_media import AudioBuffer, MidiScore, Note
from ocmusic.synth import sine, white_noise

SR = 22050


def spec_of(mags):
    mags = np.asarray(mags, float)
    return dsp.Spectrogram(mags, np.arange(mags.shape[0], dtype=float), 2048, 512, SR)


def mfcc_of(C):
    return dsp.MfccSequence(np.asarray(C, float), 512, SR)


# -- entropy ------------------------------------------------------------------


def test_entropy_examples():
    assert cx.shannon_entropy(cx.Histogram({0: 5})) == 0.0
    assert cx.shannon_entropy(cx.Histogram({i: 1 for i in range(8)})) == pytest.approx(3.0, abs=1e-12)
    assert cx.shannon_entropy(cx.Histogram({"a": 0.5, "b": 0.25, "c": 0.25})) == pytest.approx(1.5, abs=1e-12)


def test_empty_histogram():
    with pytest.raises(UndefinedFeatureError):
        cx.Histogram({0: 0, 1: 0})


def test_pitch_class_histogram_examples():
    sustained = MidiScore([Note(0.0, 4.0, 60, 100)])
    assert cx.shannon_entropy(cx.pitch_class_histogram(sustained)) == 0.0
    chromatic = MidiScore([Note(i * 0.5, 0.5, 60 + i, 100) for i in range(12)])
    assert cx.shannon_entropy(cx.pitch_class_histogram(chromatic)) == pytest.approx(math.log2(12), abs=1e-12)
    cg = MidiScore([Note(0.0, 3.0, 60, 100), Note(3.0, 1.0, 67, 100)])
    hand = -(0.75 * math.log2(0.75) + 0.25 * math.log2(0.25))
    assert cx.shannon_entropy(cx.pitch_class_histogram(cg)) == pytest.approx(hand, abs=1e-12)
    assert hand == pytest.approx(0.811, abs=5e-4)
    with pytest.raises(EmptyInputError):
        cx.pitch_class_histogram(MidiScore([]))


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=40).filter(lambda c: sum(c) > 0))
def test_entropy_bounds(counts):
    h = cx.shannon_entropy(cx.Histogram(dict(enumerate(counts))))
    assert 0.0 <= h <= math.log2(len(counts)) + 1e-9


@given(st.integers(1, 64))
def test_entropy_tight_at_uniform(n):
    assert cx.shannon_entropy(cx.Histogram({i: 2.0 for i in range(n)})) == pytest.approx(math.log2(n), abs=1e-12)


# -- spectral complexity ------------------------------------------------------


def test_stationary_sine_has_near_zero_flux():
    assert cx.spectral_complexity(dsp.stft(sine(440.0, 1.0))) < 1e-3


def test_two_frame_toy_by_hand():
    # silence then an impulse-like frame; after max normalization the second
    # frame is (0.5, 1, 0.25), so the single difference sums to 1.75
    X = np.array([[0.0, 2.0], [0.0, 4.0], [0.0, 1.0]])
    assert cx.spectral_complexity(spec_of(X)) == pytest.approx(1.75, abs=1e-12)
    alt = np.array([[0.0, 1.0, 0.0, 1.0]])
    assert cx.spectral_complexity(spec_of(alt)) == pytest.approx(1.0, abs=1e-12)


def test_single_frame_raises():
    with pytest.raises(UndefinedFeatureError):
        cx.spectral_complexity(spec_of(np.ones((4, 1))))


def test_noise_beats_equal_rms_tones_monte_carlo():
    rng = np.random.default_rng(0)
    rms = 0.2
    for trial in range(100):
        f = float(rng.uniform(50, 5000))
        tone = sine(f, 0.5, amplitude=rms * math.sqrt(2))
        noise = white_noise(0.5, rms=rms, seed=trial)
        assert cx.spectral_complexity(dsp.stft(noise)) > cx.spectral_complexity(dsp.stft(tone))


@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(2, 8)), elements=st.floats(0, 100)), st.floats(1e-3, 1e3))
def test_spectral_complexity_gain_invariant(X, g):
    a = cx.spectral_complexity(spec_of(X))
    b = cx.spectral_complexity(spec_of(g * X))
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.just(1)), elements=st.floats(0, 100)), st.integers(2, 10))
def test_frame_stationary_is_zero(col, T):
    assert cx.spectral_complexity(spec_of(np.repeat(col, T, axis=1))) == 0.0


# -- timbre variability -------------------------------------------------------


def test_timbre_variability_examples():
    assert cx.timbre_variability(mfcc_of(np.ones((13, 6))), cx.NoteSegmentation([((0, 6), 6.0)], 6)) == 0.0
    assert cx.timbre_variability(mfcc_of([[0.0, 2.0]]), cx.NoteSegmentation([((0, 2), 2.0)], 2)) == pytest.approx(1.0)
    # population variances 1 and 3 on [0, 2] and [0, 2*sqrt(3)]
    C = np.array([[0.0, 2.0, 0.0, 2 * math.sqrt(3)]])
    seg = cx.NoteSegmentation([((0, 2), 1.0), ((2, 4), 3.0)], 4)
    assert cx.timbre_variability(mfcc_of(C), seg) == pytest.approx(2.5, abs=1e-12)


def test_empty_segmentation_raises():
    with pytest.raises(UndefinedFeatureError):
        cx.timbre_variability(mfcc_of(np.ones((2, 4))), cx.NoteSegmentation([], 4))


def test_segmentation_from_score_uses_durations():
    score = MidiScore([Note(0.0, 0.5, 60, 100), Note(0.5, 1.0, 62, 100)])
    rate = SR / 512
    seg = cx.segmentation_from_score(score, 200, 512, SR)
    (r1, w1), (r2, w2) = seg.segments
    assert r1 == (0, math.ceil(0.5 * rate)) and w1 == r1[1] - r1[0]
    assert r2[0] == math.floor(0.5 * rate) and w2 == r2[1] - r2[0]


@given(st.integers(0, 10_000))
def test_timbre_variability_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    C = rng.normal(size=(5, 30))
    seg = cx.NoteSegmentation([((0, 10), 10.0), ((10, 25), 15.0), ((25, 30), 5.0)], 30)
    P = C.copy()
    for (a, b), _ in seg.segments:
        P[:, a:b] = P[:, a:b][:, rng.permutation(b - a)]
    assert cx.timbre_variability(mfcc_of(P), seg) == pytest.approx(cx.timbre_variability(mfcc_of(C), seg), rel=1e-12)


# -- Kolmogorov redundancy ----------------------------------------------------


def test_zeros_redundancy_pinned():
    # one 9-bit literal plus 16 back-references of 21 bits = 345 bits = 44
    # bytes, plus the 4-byte length header: 1 - 48/4096
    r = cx.kolmogorov_redundancy(bytes(4096))
    assert r > 0.9
    assert r == pytest.approx(1 - 48 / 4096, abs=1e-12)
    assert round(r, 5) == 0.98828


def test_random_bytes_incompressible():
    assert cx.kolmogorov_redundancy(os.urandom(4096)) <= 0.05
    assert cx.kolmogorov_redundancy(np.random.default_rng(3).bytes(4096)) <= 0.05


def test_periodic_beats_random():
    rnd = np.random.default_rng(1).bytes(4096)
    assert cx.kolmogorov_redundancy(b"AB" * 2048) > cx.kolmogorov_redundancy(rnd)


def test_tiny_payload_raises():
    with pytest.raises(UndefinedFeatureError):
        cx.kolmogorov_redundancy(b"x" * 63)


@given(st.binary(min_size=64, max_size=2000))
def test_redundancy_deterministic_and_bounded(data):
    a = cx.kolmogorov_redundancy(data)
    assert a == cx.kolmogorov_redundancy(bytes(data))
    assert 0.0 <= a < 1.0


def test_mel_payload_is_uint8_frames():
    mel = dsp.mel_spectrogram(dsp.stft(sine(440.0, 0.5)))
    payload = cx.mel_payload(mel)
    assert len(payload) == mel.energies.size


# -- autocorrelation ----------------------------------------------------------


def brute_autocorr(x, N):
    x = np.asarray(x, float)
    e = float(np.dot(x, x))
    return float(np.mean([np.dot(x[:-i], x[i:]) / e for i in range(1, N + 1)]))


def test_autocorr_constant_example():
    assert cx.autocorrelation_value(AudioBuffer(np.ones(8), SR), 2) == pytest.approx(0.8125, abs=1e-12)


def test_autocorr_impulse_is_zero():
    x = np.zeros(64)
    x[0] = 1.0
    assert cx.autocorrelation_value(AudioBuffer(x, SR), 10) == pytest.approx(0.0, abs=1e-12)


def test_square_wave_peak_at_period():
    period, T = 16, 256
    x = np.where((np.arange(T) % period) < period // 2, 1.0, -1.0)
    e = float(np.dot(x, x))
    terms = [np.dot(x[:-i], x[i:]) / e for i in range(1, period + 1)]
    assert int(np.argmax(terms)) + 1 == period
    assert terms[-1] == pytest.approx((T - period) / T)
    assert cx.autocorrelation_value(AudioBuffer(x, SR), period) == pytest.approx(np.mean(terms), abs=1e-12)


def test_zero_energy_raises():
    with pytest.raises(UndefinedFeatureError):
        cx.autocorrelation_value(AudioBuffer(np.zeros(100), SR), 5)


@given(arrays(np.float64, st.integers(4, 200), elements=st.floats(-1, 1)).filter(lambda x: np.dot(x, x) > 1e-6), st.floats(1e-3, 1e3), st.data())
def test_autocorr_matches_brute_force_and_gain_invariant(x, g, data):
    N = data.draw(st.integers(1, len(x) - 1))
    a = cx.autocorrelation_value(AudioBuffer(x, SR), N)
    assert a == pytest.approx(brute_autocorr(x, N), abs=1e-9)
    assert cx.autocorrelation_value(AudioBuffer(g * x, SR), N) == pytest.approx(a, abs=1e-9)


def test_default_max_lag():
    assert cx.default_max_lag(AudioBuffer(np.ones(100_000), SR)) == 2 * SR
    assert cx.default_max_lag(AudioBuffer(np.ones(1000), SR)) == 500
