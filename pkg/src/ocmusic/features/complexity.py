"""Chaos features (entropy, spectral complexity, timbre variability) and
Redundancy features (compression redundancy, autocorrelation)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..dsp import LOG_FLOOR, MelSpectrogram, MfccSequence, Spectrogram
from ..errors import EmptyInputError, UndefinedFeatureError
from ..io_media import AudioBuffer, MidiScore

MIN_PAYLOAD = 64
MEL_DB_RANGE = 80.0
AUTOCORR_SECONDS = 2.0


@dataclass
class Histogram:
    """Non-negative counts keyed by bin label."""

    bins: dict

    def __post_init__(self):
        if any(v < 0 or not np.isfinite(v) for v in self.bins.values()):
            raise ValueError("histogram counts must be finite and non-negative")
        if self.total <= 0:
            raise UndefinedFeatureError("histogram has no mass")

    @property
    def total(self) -> float:
        return float(sum(self.bins.values()))

    def probabilities(self) -> np.ndarray:
        counts = np.array(list(self.bins.values()), dtype=np.float64)
        return counts / counts.sum()


@dataclass
class NoteSegmentation:
    """Frame ranges ``[start, end)`` with positive weights."""

    segments: list  # [((start, end), weight), ...]
    n_frames: int

    def __post_init__(self):
        for (start, end), w in self.segments:
            if not 0 <= start < end <= self.n_frames:
                raise ValueError(f"segment ({start}, {end}) outside {self.n_frames} frames")
            if w <= 0:
                raise ValueError("segment weights must be positive")


def shannon_entropy(h: Histogram) -> float:
    """Entropy in bits of the normalized histogram."""
    p = h.probabilities()
    p = p[p > 0]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def pitch_class_histogram(score: MidiScore) -> Histogram:
    """Duration-weighted counts over the 12 pitch classes."""
    if not score.notes:
        raise EmptyInputError("score has no notes")
    counts = {pc: 0.0 for pc in range(12)}
    for n in score.notes:
        counts[n.pitch % 12] += n.duration
    return Histogram(counts)


def spectral_complexity(spec: Spectrogram) -> float:
    """Mean L1 spectral flux of the max-normalized magnitude spectrogram."""
    X = spec.magnitudes
    if X.shape[1] < 2:
        raise UndefinedFeatureError("spectral flux needs at least two frames")
    peak = X.max()
    if peak <= 0:
        return 0.0
    flux = np.abs(np.diff(X / peak, axis=1)).sum(axis=0)
    return float(flux.mean())


def segmentation_from_score(score: MidiScore, n_frames: int, hop_size: int, sample_rate: int) -> NoteSegmentation:
    """One segment per note, frames covering its onset to its end.

    Notes falling past the last frame are dropped.
    """
    rate = sample_rate / hop_size
    segs = []
    for n in score.notes:
        start = int(np.floor(n.onset * rate))
        end = min(n_frames, max(start + 1, int(np.ceil(n.end * rate))))
        if start < n_frames:
            segs.append(((start, end), float(end - start)))
    if not segs:
        raise UndefinedFeatureError("no note overlaps the analysed frames")
    return NoteSegmentation(segs, n_frames)


def onset_strength(spec: Spectrogram) -> np.ndarray:
    """Half-wave rectified flux of log-compressed magnitudes, max-normalized.

    Entry ``t`` measures the rise from frame ``t - 1`` to frame ``t``; a
    silent frame is assumed before the first, so sound present from the start
    registers as an onset at frame 0.
    """
    logX = np.log1p(100.0 * spec.magnitudes / max(spec.magnitudes.max(), LOG_FLOOR))
    flux = np.maximum(0.0, np.diff(logX, axis=1, prepend=0.0)).sum(axis=0)
    peak = flux.max()
    return flux / peak if peak > 0 else flux


def pick_peaks(flux: np.ndarray, delta: float = 0.1, window: int = 8, min_gap: int = 3) -> np.ndarray:
    """Local maxima exceeding the local median by ``delta``."""
    picks = []
    for t in range(len(flux)):
        lo, hi = max(0, t - window), min(len(flux), t + window + 1)
        left = flux[t - 1] if t > 0 else -np.inf
        right = flux[t + 1] if t + 1 < len(flux) else -np.inf
        if flux[t] >= left and flux[t] > right and flux[t] >= np.median(flux[lo:hi]) + delta:
            if not picks or t - picks[-1] >= min_gap:
                picks.append(t)
    return np.array(picks, dtype=np.int64)


def onset_frames(spec: Spectrogram, delta: float = 0.1) -> np.ndarray:
    """Frame indices of onsets, always starting with frame 0."""
    picks = pick_peaks(onset_strength(spec), delta)
    return np.unique(np.concatenate([[0], picks])).astype(np.int64)


def segmentation_from_onsets(spec: Spectrogram) -> NoteSegmentation:
    """Segments between consecutive detected onsets, used without a score."""
    bounds = list(onset_frames(spec)) + [spec.n_frames]
    segs = [((a, b), float(b - a)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    return NoteSegmentation(segs, spec.n_frames)


def timbre_variability(mfcc: MfccSequence, seg: NoteSegmentation) -> float:
    """Weighted mean over segments of the per-dimension MFCC variance."""
    if not seg.segments:
        raise UndefinedFeatureError("empty note segmentation")
    C = mfcc.coeffs
    if seg.n_frames > C.shape[1]:
        raise ValueError("segmentation extends past the MFCC frames")
    num = den = 0.0
    for (start, end), w in seg.segments:
        num += w * float(C[:, start:end].var(axis=1).mean())
        den += w
    return num / den


def mel_payload(mel: MelSpectrogram, db_range: float = MEL_DB_RANGE) -> bytes:
    """Log-mel energies quantized to 8 bits over ``db_range`` below the peak,
    serialized frame by frame."""
    db = 10.0 * np.log10(mel.energies + LOG_FLOOR)
    floor = db.max() - db_range
    q = np.clip(np.round((db - floor) / db_range * 255.0), 0, 255).astype(np.uint8)
    return q.T.tobytes()


def kolmogorov_redundancy(payload: bytes) -> float:
    """1 - compressed/original size under the bundled LZSS codec, in [0, 1)."""
    payload = bytes(payload)
    if len(payload) < MIN_PAYLOAD:
        raise UndefinedFeatureError(f"payload of {len(payload)} bytes is below {MIN_PAYLOAD}")
    k = len(kernels.lzss_compress(payload))
    return float(min(max(0.0, 1.0 - k / len(payload)), np.nextafter(1.0, 0.0)))


def default_max_lag(audio: AudioBuffer) -> int:
    return max(1, min(int(AUTOCORR_SECONDS * audio.sample_rate), len(audio) // 2))


def autocorrelation_value(audio: AudioBuffer, max_lag: int | None = None) -> float:
    """Mean over lags 1..N of sum_t x(t)x(t+i) / sum_t x(t)^2.

    The lagged sums are not rescaled for their shrinking overlap, so even a
    constant signal scores below 1.
    """
    x = np.asarray(audio.samples, dtype=np.float64)
    T = len(x)
    N = default_max_lag(audio) if max_lag is None else int(max_lag)
    if not 1 <= N < T:
        raise ValueError(f"max_lag must lie in [1, {T - 1}]")
    energy = float(np.dot(x, x))
    if energy <= 0:
        raise UndefinedFeatureError("zero-energy signal")
    n_fft = 1 << int(np.ceil(np.log2(2 * T)))
    F = np.fft.rfft(x, n_fft)
    r = np.fft.irfft(F * np.conj(F), n_fft)[1 : N + 1]
    return float(np.mean(r) / energy)
