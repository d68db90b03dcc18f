"""The ten basic features and their extraction from audio (+ optional MIDI, stems)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import dsp
from ..errors import OcMusicError
from ..features import complexity, harmony, symmetry
from ..io_media import AudioBuffer, MidiScore

log = logging.getLogger(__name__)

FEATURE_NAMES = (
    "timbre_harmony",
    "interval_harmony",
    "chord_progression_harmony",
    "dynamic_harmony",
    "self_similarity_fitness",
    "shannon_entropy",
    "spectral_complexity",
    "timbre_variability",
    "kolmogorov_redundancy",
    "autocorrelation_value",
)
SYMBOLIC = frozenset({"interval_harmony", "chord_progression_harmony", "dynamic_harmony", "shannon_entropy"})


@dataclass
class BasicFeatureVector:
    """Feature values keyed by name; missing features are ``nan`` and flagged.

    ``degraded`` lists features computed from a fallback path (pseudo stems,
    onset segmentation, default meter) rather than the intended input.
    """

    values: dict
    available: dict
    degraded: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        for name in FEATURE_NAMES:
            self.values.setdefault(name, float("nan"))
            self.available.setdefault(name, False)
            ok = self.available[name]
            if ok and not np.isfinite(self.values[name]):
                raise ValueError(f"available feature {name} is not finite")
            if not ok:
                self.values[name] = float("nan")

    @classmethod
    def from_array(cls, x, available=None):
        x = np.asarray(x, dtype=np.float64)
        if available is None:
            available = np.isfinite(x)
        return cls({n: float(v) for n, v in zip(FEATURE_NAMES, x)}, {n: bool(a) for n, a in zip(FEATURE_NAMES, available)})

    def as_array(self) -> np.ndarray:
        return np.array([self.values[n] for n in FEATURE_NAMES])

    def mask(self) -> np.ndarray:
        return np.array([self.available[n] for n in FEATURE_NAMES])

    def __getattr__(self, name):
        if name in FEATURE_NAMES:
            return self.values[name]
        raise AttributeError(name)

    def to_dict(self) -> dict:
        return {
            "values": {n: (self.values[n] if self.available[n] else None) for n in FEATURE_NAMES},
            "degraded": sorted(self.degraded),
        }


def _try(name, fn, values, available, failures):
    try:
        values[name] = float(fn())
        available[name] = bool(np.isfinite(values[name]))
    except (OcMusicError, ValueError) as exc:
        failures[name] = str(exc)
        available[name] = False


def extract_basic_features(audio: AudioBuffer, midi: MidiScore | None = None, stems: harmony.StemSet | None = None) -> BasicFeatureVector:
    """Compute all ten basic features.

    Symbolic features need ``midi`` and are flagged unavailable without it.
    Timbre harmony falls back to band-split pseudo stems and timbre
    variability to onset segmentation; both are then listed as degraded.
    """
    values: dict = {}
    available: dict = {}
    failures: dict = {}
    degraded = set()

    spec = dsp.stft(audio)
    mel = dsp.mel_spectrogram(spec)

    if stems is None:
        stems = harmony.pseudo_stems(audio)
    if stems.degraded:
        degraded.add("timbre_harmony")

    def timbre():
        return harmony.timbre_harmony(harmony.timbre_balance(stems), harmony.timbre_complementarity(stems))

    _try("timbre_harmony", timbre, values, available, failures)
    _try("self_similarity_fitness", lambda: symmetry.symmetry_feature(symmetry.build_ssm(dsp.chroma(spec))), values, available, failures)
    _try("spectral_complexity", lambda: complexity.spectral_complexity(spec), values, available, failures)

    def variability():
        if midi is not None and midi.notes:
            seg = complexity.segmentation_from_score(midi, spec.n_frames, spec.hop_size, spec.sample_rate)
        else:
            degraded.add("timbre_variability")
            seg = complexity.segmentation_from_onsets(spec)
        return complexity.timbre_variability(dsp.mfcc(mel), seg)

    _try("timbre_variability", variability, values, available, failures)
    _try("kolmogorov_redundancy", lambda: complexity.kolmogorov_redundancy(complexity.mel_payload(mel)), values, available, failures)
    _try("autocorrelation_value", lambda: complexity.autocorrelation_value(audio), values, available, failures)

    if midi is not None and midi.notes:
        _try("interval_harmony", lambda: harmony.interval_harmony(midi), values, available, failures)
        _try("chord_progression_harmony", lambda: harmony.chord_progression_harmony(harmony.extract_chords(midi)), values, available, failures)

        def dynamics():
            grid = harmony.metrical_grid(midi)
            if grid.default_meter:
                degraded.add("dynamic_harmony")
            return harmony.dynamic_harmony(midi, grid)

        _try("dynamic_harmony", dynamics, values, available, failures)
        _try("shannon_entropy", lambda: complexity.shannon_entropy(complexity.pitch_class_histogram(midi)), values, available, failures)
    for name, why in failures.items():
        log.debug("feature %s unavailable: %s", name, why)
    return BasicFeatureVector(values, available, frozenset(degraded))
