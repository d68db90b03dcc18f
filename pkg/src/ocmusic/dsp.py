"""Spectral front-end shared by the feature extractors: STFT, mel, chroma, MFCC."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct

from .errors import ConfigurationError, TooShortError
from .io_media import AudioBuffer

FRAME_SIZE = 2048
HOP_SIZE = 512
LOG_FLOOR = 1e-10


@dataclass
class Spectrogram:
    magnitudes: np.ndarray  # (F, T)
    freqs: np.ndarray
    frame_size: int
    hop_size: int
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[1]

    def frame_times(self) -> np.ndarray:
        """Start time in seconds of every frame."""
        return np.arange(self.n_frames) * self.hop_size / self.sample_rate


@dataclass
class MelSpectrogram:
    energies: np.ndarray  # (M, T)
    filters: np.ndarray  # (M, F)
    hop_size: int
    sample_rate: int

    @property
    def n_mels(self) -> int:
        return self.energies.shape[0]


@dataclass
class ChromaSequence:
    vectors: np.ndarray  # (12, T)
    hop_size: int
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.vectors.shape[1]


@dataclass
class MfccSequence:
    coeffs: np.ndarray  # (K, T)
    hop_size: int
    sample_rate: int


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frames(x: np.ndarray, frame_size: int, hop_size: int) -> np.ndarray:
    """View of ``x`` as (T, frame_size) hopped frames."""
    return sliding_window_view(x, frame_size)[::hop_size]


def stft(audio: AudioBuffer, frame_size: int = FRAME_SIZE, hop_size: int = HOP_SIZE) -> Spectrogram:
    """Hann-windowed magnitude STFT without padding.

    The frame count is ``1 + (len - frame_size) // hop_size``.
    """
    if frame_size < 2 or frame_size & (frame_size - 1):
        raise ConfigurationError("frame_size must be a power of two")
    if not 0 < hop_size <= frame_size:
        raise ConfigurationError("hop_size must lie in (0, frame_size]")
    if len(audio) < frame_size:
        raise TooShortError(f"audio has {len(audio)} samples, frame needs {frame_size}")
    windowed = frames(audio.samples, frame_size, hop_size) * hann(frame_size)
    mags = np.abs(np.fft.rfft(windowed, axis=1)).T
    freqs = np.fft.rfftfreq(frame_size, 1.0 / audio.sample_rate)
    return Spectrogram(np.ascontiguousarray(mags), freqs, frame_size, hop_size, audio.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(freqs: np.ndarray, sample_rate: int, n_mels: int, fmin: float = 0.0, fmax: float | None = None):
    """Triangular HTK-mel filters evaluated at ``freqs``, rows summing to 1.

    A filter too narrow to cover any bin is assigned the bin nearest its
    centre so no row is empty.
    """
    fmax = sample_rate / 2.0 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    f = freqs[None, :]
    rise = (f - lo) / (mid - lo)
    fall = (hi - f) / (hi - mid)
    W = np.maximum(0.0, np.minimum(rise, fall))
    for k in np.flatnonzero(W.sum(axis=1) <= 0):
        W[k, np.argmin(np.abs(freqs - edges[k + 1]))] = 1.0
    return W / W.sum(axis=1, keepdims=True)


def mel_spectrogram(spec: Spectrogram, n_mels: int = 40) -> MelSpectrogram:
    """Mel energies from squared STFT magnitudes."""
    if n_mels < 4:
        raise ConfigurationError("n_mels must be at least 4")
    if n_mels > spec.magnitudes.shape[0]:
        raise ConfigurationError(f"n_mels={n_mels} exceeds {spec.magnitudes.shape[0]} frequency bins")
    W = mel_filterbank(spec.freqs, spec.sample_rate, n_mels)
    return MelSpectrogram(W @ (spec.magnitudes**2), W, spec.hop_size, spec.sample_rate)


def pitch_classes(freqs: np.ndarray, fmin: float = 55.0, fmax: float = 4000.0) -> np.ndarray:
    """Pitch class of every frequency, -1 outside ``[fmin, fmax]``."""
    pcs = np.full(freqs.shape, -1, dtype=np.int64)
    ok = (freqs >= fmin) & (freqs <= fmax)
    pcs[ok] = np.mod(np.round(12.0 * np.log2(freqs[ok] / 440.0) + 69.0).astype(np.int64), 12)
    return pcs


def chroma(spec: Spectrogram) -> ChromaSequence:
    """12-bin chroma by mapping STFT bin energies onto pitch classes.

    Columns are scaled to unit maximum; silent frames stay zero.
    """
    if spec.sample_rate < 8000:
        raise ConfigurationError("chroma needs a sample rate of at least 8000 Hz")
    pcs = pitch_classes(spec.freqs)
    energy = spec.magnitudes**2
    C = np.zeros((12, spec.n_frames))
    for pc in range(12):
        sel = pcs == pc
        if sel.any():
            C[pc] = energy[sel].sum(axis=0)
    peak = C.max(axis=0)
    nz = peak > 0
    C[:, nz] /= peak[nz]
    return ChromaSequence(C, spec.hop_size, spec.sample_rate)


def mfcc(mel: MelSpectrogram, n_coeffs: int = 13) -> MfccSequence:
    """Orthonormal DCT-II of log mel energies, coefficient 0 kept."""
    if n_coeffs > mel.n_mels:
        raise ConfigurationError("n_coeffs cannot exceed n_mels")
    logE = np.log(mel.energies + LOG_FLOOR)
    coeffs = dct(logE, type=2, norm="ortho", axis=0)[:n_coeffs]
    return MfccSequence(coeffs, mel.hop_size, mel.sample_rate)
