"""Harmony-group basic features: timbre, interval, chord progression, dynamics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft

from ..errors import UndefinedFeatureError
from ..io_media import AudioBuffer, MidiScore

EPS = 1e-10
DEFAULT_BAND_EDGES = (0.0, 250.0, 1000.0, 4000.0, None)  # None = Nyquist
DEFAULT_ALPHA = 0.5
ALIGN_TOLERANCE = 0.05
DISSONANT_CLASSES = frozenset({1, 2, 6, 10, 11})

# weight of interval classes 1..12 (unison folded into 12), most consonant high
DEFAULT_INTERVAL_WEIGHTS = np.array(
    [0.0, 0.2, 0.6, 0.7, 0.8, 0.1, 0.9, 0.55, 0.5, 0.25, 0.05, 1.0]
)


# --------------------------------------------------------------------------
# Timbre
# --------------------------------------------------------------------------


@dataclass
class StemSet:
    """Per-instrument stems zero-padded to a common length, plus their mix."""

    stems: list[AudioBuffer]
    mix: AudioBuffer
    degraded: bool = False

    @classmethod
    def from_buffers(cls, stems, mix=None, degraded=False):
        stems = list(stems)
        if not stems:
            raise ValueError("at least one stem required")
        rate = stems[0].sample_rate
        if any(s.sample_rate != rate for s in stems) or (mix is not None and mix.sample_rate != rate):
            raise ValueError("stems must share one sample rate")
        n = max([len(s) for s in stems] + ([len(mix)] if mix is not None else []))

        def pad(x):
            return np.pad(x.samples, (0, n - len(x)))

        padded = [AudioBuffer(pad(s), rate) for s in stems]
        if mix is None:
            mix = AudioBuffer(np.clip(sum(p.samples for p in padded), -1.0, 1.0), rate)
        else:
            mix = AudioBuffer(pad(mix), rate)
        return cls(padded, mix, degraded)

    @property
    def sample_rate(self) -> int:
        return self.mix.sample_rate


def _band_edges(edges, sample_rate):
    return [sample_rate / 2.0 if e is None else float(e) for e in edges]


def pseudo_stems(mix: AudioBuffer, edges=DEFAULT_BAND_EDGES) -> StemSet:
    """Band-passed copies of the mix, used when real stems are missing."""
    edges = _band_edges(edges, mix.sample_rate)
    spec = sp_fft.rfft(mix.samples)
    freqs = np.fft.rfftfreq(len(mix), 1.0 / mix.sample_rate)
    stems = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (freqs >= lo) & ((freqs < hi) | (hi >= edges[-1]))
        stems.append(AudioBuffer(np.clip(sp_fft.irfft(spec * sel, n=len(mix)), -1, 1), mix.sample_rate))
    return StemSet(stems, mix, degraded=True)


def band_energies(stems: StemSet, edges=DEFAULT_BAND_EDGES) -> np.ndarray:
    """Energy of every stem in every band, shape (n_stems, n_bands)."""
    edges = _band_edges(edges, stems.sample_rate)
    n = len(stems.mix)
    freqs = np.fft.rfftfreq(n, 1.0 / stems.sample_rate)
    E = np.zeros((len(stems.stems), len(edges) - 1))
    for i, s in enumerate(stems.stems):
        power = np.abs(sp_fft.rfft(s.samples)) ** 2
        for f, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
            sel = (freqs >= lo) & ((freqs < hi) | (hi >= edges[-1]))
            E[i, f] = power[sel].sum()
    return E


def balance_from_energies(E) -> float:
    """Worst band's min/max energy ratio across stems.

    Energies are scaled by their grand total first, which makes the score
    invariant to a common gain.
    """
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] < 2:
        raise UndefinedFeatureError("timbre balance needs at least two stems")
    if E.shape[1] < 2:
        raise UndefinedFeatureError("timbre balance needs at least two bands")
    total = E.sum()
    if total > 0:
        E = E / total
    ratios = (E.min(axis=0) + EPS) / (E.max(axis=0) + EPS)
    return float(ratios.min())


def timbre_balance(stems: StemSet, bands=DEFAULT_BAND_EDGES) -> float:
    if len(stems.stems) < 2:
        raise UndefinedFeatureError("timbre balance needs at least two stems")
    return balance_from_energies(band_energies(stems, bands))


def timbre_complementarity(stems: StemSet) -> float:
    """Average normalised correlation between each stem and the mix, in [-1, 1].

    A silent mix gives 0; a silent stem contributes 0.
    """
    s = stems.mix.samples
    s_norm = np.sqrt(np.mean(s * s))
    if s_norm == 0:
        return 0.0
    total = 0.0
    for stem in stems.stems:
        x = stem.samples
        x_norm = np.sqrt(np.mean(x * x))
        if x_norm > 0:
            total += np.mean((x / x_norm) * (s / s_norm))
    return float(np.clip(total / len(stems.stems), -1.0, 1.0))


def timbre_harmony(balance: float, complementarity: float, alpha: float = DEFAULT_ALPHA) -> float:
    return alpha * balance + (1.0 - alpha) * complementarity


# --------------------------------------------------------------------------
# Intervals
# --------------------------------------------------------------------------


def interval_class(semitones: int) -> int:
    """Fold a semitone distance into classes 1..12 (unison and octave -> 12)."""
    c = abs(int(semitones)) % 12
    return 12 if c == 0 else c


def _overlap(a, b) -> bool:
    return a.onset < b.end and b.onset < a.end


def interval_pairs(score: MidiScore) -> list[tuple[int, int]]:
    """Pitch pairs that form intervals.

    Harmonic pairs are all notes that sound together. Melodic pairs join the
    highest notes of consecutive onsets when those two notes do not overlap
    (overlapping ones are already harmonic pairs).
    """
    notes = score.notes
    onsets = np.array([n.onset for n in notes])
    pairs = []
    for i, a in enumerate(notes):
        stop = int(np.searchsorted(onsets, a.end, side="left"))
        for j in range(i + 1, stop):
            if _overlap(a, notes[j]):
                pairs.append((a.pitch, notes[j].pitch))
    top = []
    for n in notes:
        if top and abs(top[-1].onset - n.onset) < 1e-9:
            if n.pitch > top[-1].pitch:
                top[-1] = n
        else:
            top.append(n)
    for a, b in zip(top[:-1], top[1:]):
        if not _overlap(a, b):
            pairs.append((a.pitch, b.pitch))
    return pairs


def interval_ratios(score: MidiScore) -> np.ndarray:
    """Share of each interval class 1..12 among all intervals (sums to 1)."""
    if len(score.notes) < 2:
        raise UndefinedFeatureError("interval harmony needs at least two notes")
    pairs = interval_pairs(score)
    counts = np.zeros(12)
    for p, q in pairs:
        counts[interval_class(p - q) - 1] += 1
    return counts / counts.sum()


def interval_harmony(score: MidiScore, weights=DEFAULT_INTERVAL_WEIGHTS, bias: float = 0.0) -> float:
    return float(np.dot(np.asarray(weights, dtype=np.float64), interval_ratios(score)) + bias)


# --------------------------------------------------------------------------
# Chords
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Chord:
    pitch_classes: frozenset
    start: float
    end: float
    soprano: int
    bass: int


@dataclass
class ChordSequence:
    chords: list[Chord] = field(default_factory=list)
    key: int | None = None
    mode: str = "major"

    def __len__(self):
        return len(self.chords)


def estimate_key(score: MidiScore) -> tuple[int, str]:
    """Pitch class with the largest total duration; major unless its minor
    third outlasts its major third. Ties go to the lower pitch class."""
    hist = np.zeros(12)
    for n in score.notes:
        hist[n.pitch % 12] += n.duration
    key = int(np.argmax(hist))
    mode = "major" if hist[(key + 4) % 12] >= hist[(key + 3) % 12] else "minor"
    return key, mode


def _bar_beats(score: MidiScore) -> float:
    if score.time_signatures:
        _, num, den = score.time_signatures[0]
        return num * 4.0 / den
    return 4.0


def extract_chords(score: MidiScore, window: float | None = None) -> ChordSequence:
    """Sounding pitch-class sets per window of ``window`` quarter-note beats.

    The default window is one bar of the first time signature (4/4 if none).
    Silent windows are left out.
    """
    if not score.notes:
        return ChordSequence()
    window = _bar_beats(score) if window is None else float(window)
    if window <= 0:
        raise ValueError("window must be positive")
    last = score.seconds_to_beats(score.end_time)
    chords = []
    b = 0.0
    while b < last - 1e-9:
        t0 = score.beats_to_seconds(b)
        t1 = score.beats_to_seconds(b + window)
        sounding = [n for n in score.notes if n.onset < t1 and n.end > t0]
        if sounding:
            chords.append(
                Chord(
                    frozenset(n.pitch % 12 for n in sounding),
                    t0,
                    t1,
                    max(n.pitch for n in sounding),
                    min(n.pitch for n in sounding),
                )
            )
        b += window
    key, mode = estimate_key(score)
    return ChordSequence(chords, key, mode)


def chord_root(chord: Chord) -> int:
    """Pitch class best explained as a triad root.

    Ties prefer the bass, then the tied class closest above the bass, so
    the choice follows a global transposition.
    """
    pcs = chord.pitch_classes

    def fit(r):
        third = ((r + 4) % 12 in pcs) or ((r + 3) % 12 in pcs)
        return 1 + int(third) + int((r + 7) % 12 in pcs)

    best = max(fit(r) for r in pcs)
    tied = [r for r in pcs if fit(r) == best]
    bass = chord.bass % 12
    return min(tied, key=lambda r: (r - bass) % 12)


def key_triad(key: int, mode: str) -> frozenset:
    third = 4 if mode == "major" else 3
    return frozenset({key % 12, (key + third) % 12, (key + 7) % 12})


def functional_triads(key: int, mode: str) -> list[frozenset]:
    """Tonic, subdominant and dominant triads of the key."""
    k = key % 12
    if mode == "major":
        return [key_triad(k, "major"), frozenset({(k + 5) % 12, (k + 9) % 12, k}), frozenset({(k + 7) % 12, (k + 11) % 12, (k + 2) % 12})]
    return [
        key_triad(k, "minor"),
        frozenset({(k + 5) % 12, (k + 8) % 12, k}),
        frozenset({(k + 7) % 12, (k + 11) % 12, (k + 2) % 12}),
        frozenset({(k + 7) % 12, (k + 10) % 12, (k + 2) % 12}),
    ]


def jaccard_distance(a: frozenset, b: frozenset) -> float:
    union = a | b
    return 0.0 if not union else 1.0 - len(a & b) / len(union)


def fifths_distance(interval: int) -> float:
    """Steps around the circle of fifths for an interval, scaled to [0, 1]."""
    k = (interval * 7) % 12
    return min(k, 12 - k) / 6.0


def chord_dissonance(pcs: frozenset) -> float:
    """Fraction of pitch-class pairs a step, tritone or seventh apart."""
    pcs = sorted(pcs)
    pairs = [(a, b) for i, a in enumerate(pcs) for b in pcs[i + 1 :]]
    if not pairs:
        return 0.0
    return sum(((b - a) % 12) in DISSONANT_CLASSES for a, b in pairs) / len(pairs)


def progression_terms(chords: ChordSequence) -> np.ndarray:
    """Per-transition terms (d1, d2, d3, c, m, h), shape (n_chords - 1, 6)."""
    if len(chords) < 2:
        raise UndefinedFeatureError("chord progression harmony needs at least two chords")
    key = chords.key if chords.key is not None else 0
    tonic = key_triad(key, chords.mode)
    functions = functional_triads(key, chords.mode)
    rows = []
    seq = chords.chords
    for prev, cur in zip(seq[:-1], seq[1:]):
        pcs = cur.pitch_classes
        rows.append(
            [
                jaccard_distance(pcs, prev.pitch_classes),
                jaccard_distance(pcs, tonic),
                fifths_distance(chord_root(cur) - key),
                chord_dissonance(pcs),
                min(abs(cur.soprano - prev.soprano) / 12.0, 1.0),
                0.0 if pcs in functions else 1.0,
            ]
        )
    return np.array(rows)


def chord_progression_harmony(chords: ChordSequence, lambdas=(1.0,) * 6) -> float:
    """Mean weighted progression tension over consecutive chords."""
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.shape != (6,):
        raise ValueError("six lambda weights required")
    return float((progression_terms(chords) @ lam).mean())


# --------------------------------------------------------------------------
# Dynamics
# --------------------------------------------------------------------------


@dataclass
class MetricalGrid:
    beat_times: np.ndarray
    weights: np.ndarray
    default_meter: bool = False


def beat_weights(numerator: int) -> list[int]:
    """Strength of every beat of a bar; the downbeat is strictly strongest."""
    if numerator <= 1:
        return [1]
    w = [1] * numerator
    w[0] = numerator
    if numerator % 2 == 0 and numerator >= 4:
        w[numerator // 2] = 2
    if numerator % 3 == 0 and numerator >= 6:
        for k in range(3, numerator, 3):
            w[k] = 2
    return w


def metrical_grid(score: MidiScore) -> MetricalGrid:
    """Beat times laid on the tempo map with per-beat metrical weights."""
    signatures = list(score.time_signatures)
    default = not signatures
    if default:
        signatures = [(0.0, 4, 4)]
    elif signatures[0][0] > 0:
        signatures.insert(0, (0.0, 4, 4))
    end = score.end_time
    times, weights = [], []
    for k, (t0, num, den) in enumerate(signatures):
        t_stop = signatures[k + 1][0] if k + 1 < len(signatures) else end
        step = 4.0 / den
        pattern = beat_weights(num)
        b0 = score.seconds_to_beats(t0)
        i = 0
        while True:
            t = score.beats_to_seconds(b0 + i * step)
            if t >= t_stop - 1e-9:
                break
            times.append(t)
            weights.append(pattern[i % num])
            i += 1
    return MetricalGrid(np.array(times), np.array(weights, dtype=np.int64), default)


def cosine(D, M) -> float:
    D = np.asarray(D, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    denom = np.linalg.norm(D) * np.linalg.norm(M)
    if denom == 0:
        raise UndefinedFeatureError("zero dynamic or metrical vector")
    return float(np.clip(D @ M / denom, -1.0, 1.0))


def aligned_dynamics(score: MidiScore, grid: MetricalGrid, tolerance: float = ALIGN_TOLERANCE):
    """Mean velocity and weight of every beat with a note onset nearby."""
    onsets = np.array([n.onset for n in score.notes])
    velocity = np.array([n.velocity for n in score.notes], dtype=np.float64)
    D, M = [], []
    for t, w in zip(grid.beat_times, grid.weights):
        sel = np.abs(onsets - t) <= tolerance if len(onsets) else np.zeros(0, bool)
        if sel.any():
            D.append(velocity[sel].mean())
            M.append(w)
    return np.array(D), np.array(M, dtype=np.float64)


def dynamic_harmony(score: MidiScore, grid: MetricalGrid | None = None, tolerance: float = ALIGN_TOLERANCE) -> float:
    """Cosine similarity between beat dynamics and metrical weights."""
    grid = metrical_grid(score) if grid is None else grid
    D, M = aligned_dynamics(score, grid, tolerance)
    if len(D) == 0:
        raise UndefinedFeatureError("no note onsets aligned to the beat grid")
    return cosine(D, M)
