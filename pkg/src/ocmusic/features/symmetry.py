"""Symmetry feature: repetition fitness of segments of a self-similarity matrix.

The fitness of a segment is the harmonic mean of how well its optimal path
family scores (beyond the trivial self-match) and how much of the piece those
paths cover. Path families come from the accumulation kernel in
:mod:`ocmusic.kernels`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..dsp import ChromaSequence
from ..errors import UndefinedFeatureError

MAX_FRAMES = 128
DEFAULT_SMOOTH = 4
KEEP_FRACTION = 0.1
MIN_SEGMENT = 8  # shorter segments match random blobs
PENALTY = -2.0


@dataclass
class SSM:
    sim: np.ndarray
    hop_seconds: float

    @property
    def n_frames(self) -> int:
        return self.sim.shape[0]


@dataclass
class SegmentFitness:
    segment: tuple[int, int]  # [start, end) frames
    sigma_bar: float
    gamma_bar: float
    fitness: float
    paths: list = field(default_factory=list, repr=False)


def harmonic_fitness(sigma_bar: float, gamma_bar: float) -> float:
    total = sigma_bar + gamma_bar
    return 0.0 if total <= 0 else 2.0 * sigma_bar * gamma_bar / total


def _smooth_downsample(X: np.ndarray, smooth: int, max_frames: int) -> tuple[np.ndarray, int]:
    T = X.shape[1]
    if smooth > 1:
        pad_l = (smooth - 1) // 2
        padded = np.pad(X, ((0, 0), (pad_l, smooth - 1 - pad_l)), mode="edge")
        kernel = np.ones(smooth) / smooth
        X = np.stack([np.convolve(row, kernel, mode="valid") for row in padded])
    factor = int(np.ceil(T / max_frames))
    return X[:, ::factor], factor


def build_ssm(chroma: ChromaSequence, smooth: int = DEFAULT_SMOOTH, max_frames: int = MAX_FRAMES) -> SSM:
    """Cosine self-similarity of smoothed, downsampled chroma columns."""
    X = np.asarray(chroma.vectors, dtype=np.float64)
    if X.shape[1] < 8:
        raise UndefinedFeatureError("self-similarity needs at least 8 chroma frames")
    X, factor = _smooth_downsample(X, smooth, max_frames)
    norms = np.linalg.norm(X, axis=0)
    Xn = np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)
    sim = np.clip(Xn.T @ Xn, 0.0, 1.0)
    sim = 0.5 * (sim + sim.T)
    np.fill_diagonal(sim, 1.0)
    return SSM(sim, factor * chroma.hop_size / chroma.sample_rate)


def threshold_ssm(sim: np.ndarray, keep: float = KEEP_FRACTION, penalty: float = PENALTY) -> np.ndarray:
    """Keep the top ``keep`` fraction of cells rescaled to [0, 1]; the rest
    become ``penalty``."""
    thr = np.quantile(sim, 1.0 - keep)
    top = sim.max()
    out = np.full(sim.shape, penalty)
    kept = sim >= thr
    if top > thr:
        out[kept] = (sim[kept] - thr) / (top - thr)
    else:
        out[kept] = 1.0
    return out


def _fitness(S_thr: np.ndarray, start: int, length: int) -> SegmentFitness:
    T = S_thr.shape[0]
    D, B = kernels.accumulated_score(S_thr[:, start : start + length])
    score, paths = kernels.backtrack(D, B)
    total_len = sum(len(p) for p in paths)
    coverage = sum(p[-1][0] - p[0][0] + 1 for p in paths)
    sigma_bar = (score - length) / (total_len - length) if total_len > length else 0.0
    gamma_bar = (coverage - length) / (T - length)
    sigma_bar = float(np.clip(sigma_bar, 0.0, 1.0))
    gamma_bar = float(np.clip(gamma_bar, 0.0, 1.0))
    return SegmentFitness((start, start + length), sigma_bar, gamma_bar, harmonic_fitness(sigma_bar, gamma_bar), paths)


def _check_segment(T: int, segment) -> tuple[int, int]:
    start, end = int(segment[0]), int(segment[1])
    length = end - start
    if start < 0 or end > T or length < 2 or length > T // 2:
        raise ValueError(f"degenerate segment {segment!r} for {T} frames")
    return start, length


def segment_fitness(ssm: SSM, segment, keep: float = KEEP_FRACTION) -> SegmentFitness:
    """Fitness of the frame range ``segment = (start, end)``."""
    start, length = _check_segment(ssm.n_frames, segment)
    return _fitness(threshold_ssm(ssm.sim, keep), start, length)


def candidate_segments(T: int):
    """Coarse grid of (start, end) segments: lengths 8, 12, .. T/2 at hop T/16.

    Very short pieces fall back to the single length T/2.
    """
    half = T // 2
    lengths = list(range(MIN_SEGMENT, half + 1, 4))
    if half >= 2 and half not in lengths:
        lengths.append(half)
    hop = max(1, T // 16)
    for length in lengths:
        for start in range(0, T - length + 1, hop):
            yield start, start + length


def best_segment(ssm: SSM, keep: float = KEEP_FRACTION) -> SegmentFitness:
    S_thr = threshold_ssm(ssm.sim, keep)
    best = None
    for start, end in candidate_segments(ssm.n_frames):
        fit = _fitness(S_thr, start, end - start)
        if best is None or fit.fitness > best.fitness:
            best = fit
    return best


def symmetry_feature(ssm: SSM, keep: float = KEEP_FRACTION) -> float:
    """Maximum segment fitness over the candidate grid, in [0, 1]."""
    return best_segment(ssm, keep).fitness
