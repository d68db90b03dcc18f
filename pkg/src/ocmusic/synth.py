"""Synthetic audio and MIDI material for tests, benchmarks and fixture corpora."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .io_media import AudioBuffer, MidiScore, Note, encode_midi, encode_wav

SAMPLE_RATE = 22050


def midi_to_hz(pitch: float) -> float:
    return 440.0 * 2.0 ** ((pitch - 69.0) / 12.0)


def sine(freq: float, seconds: float, sample_rate: int = SAMPLE_RATE, amplitude: float = 0.5, phase: float = 0.0) -> AudioBuffer:
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return AudioBuffer(amplitude * np.sin(2 * np.pi * freq * t + phase), sample_rate)


def white_noise(seconds: float, sample_rate: int = SAMPLE_RATE, rms: float = 0.2, seed: int = 0) -> AudioBuffer:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(int(round(seconds * sample_rate)))
    x *= rms / np.sqrt(np.mean(x * x))
    return AudioBuffer(np.clip(x, -1, 1), sample_rate)


def tone(pitch: float, seconds: float, sample_rate: int = SAMPLE_RATE, velocity: int = 100, harmonics: int = 4) -> np.ndarray:
    """Decaying harmonic tone with a short attack."""
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = midi_to_hz(pitch)
    x = np.zeros(n)
    for h in range(1, harmonics + 1):
        if f0 * h < sample_rate / 2:
            x += np.sin(2 * np.pi * f0 * h * t) / h
    attack = np.minimum(1.0, t / 0.01)
    release = np.minimum(1.0, (seconds - t) / 0.02).clip(0, 1)
    env = attack * release * np.exp(-1.5 * t)
    return (velocity / 127.0) * env * x / harmonics


def render(score: MidiScore, sample_rate: int = SAMPLE_RATE, tail: float = 0.0, gain: float = 0.3) -> AudioBuffer:
    """Additive rendering of every note in a score."""
    n = int(np.ceil((score.end_time + tail) * sample_rate)) + 1
    out = np.zeros(n)
    for note in score.notes:
        start = int(round(note.onset * sample_rate))
        x = tone(note.pitch, note.duration, sample_rate, note.velocity)
        out[start : start + len(x)] += x[: n - start]
    peak = np.max(np.abs(out)) if n else 0.0
    if peak > 0:
        out *= gain / peak
    return AudioBuffer(out, sample_rate)


def score_from_pitches(pitches, beat: float = 0.5, velocities=None, bpm: float = 120.0, numerator: int = 4) -> MidiScore:
    """One note per beat; ``None`` entries are rests, tuples are chords."""
    notes = []
    for k, p in enumerate(pitches):
        if p is None:
            continue
        group = p if isinstance(p, (tuple, list)) else (p,)
        vel = 100 if velocities is None else int(velocities[k])
        for q in group:
            notes.append(Note(k * beat, beat, int(q), vel))
    return MidiScore(notes, [(0.0, bpm)], [(0.0, numerator, 4)])


MELODY_A = [60, 64, 67, 72, 67, 64, 62, 65, 69, 65, 62, 59, 60, 67, 64, 60]
MELODY_B = [57, 61, 64, 69, 66, 62, 59, 63, 66, 71, 68, 64, 61, 66, 63, 58]


def abab_score(beat: float = 0.25, meter_dynamics: bool = True) -> MidiScore:
    """Two contrasting melodies in ABAB form, velocities following a 4/4 meter."""
    pitches = MELODY_A + MELODY_B + MELODY_A + MELODY_B
    velocities = None
    if meter_dynamics:
        velocities = [(100, 40, 70, 40)[k % 4] for k in range(len(pitches))]
    return score_from_pitches(pitches, beat, velocities, bpm=60.0 / beat)


def ideal_score(bars: int = 8, bpm: float = 120.0) -> MidiScore:
    """Arpeggiated diatonic triads over a held root, one progression
    (I IV V vi) repeated so the piece reads ABAB, velocities proportional to
    metrical weight."""
    beat = 60.0 / bpm
    weights = (4, 1, 2, 1)
    triads = [(48, 60, 64, 67), (53, 60, 65, 69), (55, 59, 62, 67), (57, 60, 64, 69)]
    notes = []
    for bar in range(bars):
        root, *upper = triads[bar % len(triads)]
        for k in range(4):
            t = (bar * 4 + k) * beat
            v = 25 * weights[k]
            notes.append(Note(t, beat, root, v))
            notes.append(Note(t, beat, upper[min(k, 2)] if k < 3 else upper[1], v))
    return MidiScore(notes, [(0.0, bpm)], [(0.0, 4, 4)])


def random_score(seconds: float = 4.0, seed: int = 0, density: float = 4.0) -> MidiScore:
    rng = np.random.default_rng(seed)
    n = max(2, int(seconds * density))
    notes = []
    for _ in range(n):
        onset = float(rng.uniform(0, seconds - 0.1))
        dur = float(rng.uniform(0.05, 0.6))
        notes.append(Note(onset, dur, int(rng.integers(40, 90)), int(rng.integers(20, 127))))
    return MidiScore(notes, [(0.0, float(rng.uniform(60, 180)))], [(0.0, 4, 4)])


def write_fixture_corpus(root, n_per_class: int = 4, seed: int = 0, sample_rate: int = SAMPLE_RATE) -> Path:
    """Write a small labelled corpus (WAV + MIDI + manifest) under ``root``.

    Positive tracks are structured ABAB pieces with metrical dynamics, medium
    tracks are the same material with flattened dynamics and a jittered
    second half, negative tracks are random notes over noise. Sessions chain
    tracks of the same class.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines = []
    ids = {"negative": [], "medium": [], "positive": []}
    for k in range(n_per_class):
        transpose = int(rng.integers(-3, 4))
        pos = abab_score(beat=0.25)
        pos = MidiScore([Note(n.onset, n.duration, n.pitch + transpose, n.velocity) for n in pos.notes], pos.tempo_map, pos.time_signatures)
        med_notes = []
        for n in pos.notes:
            jitter = int(rng.integers(-2, 3)) if n.onset >= 8.0 else 0
            med_notes.append(Note(n.onset, n.duration, n.pitch + jitter, 70))
        med = MidiScore(med_notes, pos.tempo_map, pos.time_signatures)
        neg = random_score(16.0, seed=seed * 1000 + k, density=6.0)
        for label, score in (("positive", pos), ("medium", med), ("negative", neg)):
            tid = f"{label[:3]}{k:02d}"
            audio = render(score, sample_rate)
            if label == "negative":
                noise = white_noise(audio.duration, sample_rate, rms=0.05, seed=seed * 1000 + k)
                audio = AudioBuffer(np.clip(audio.samples + noise.samples[: len(audio)], -1, 1), sample_rate)
            (root / f"{tid}.wav").write_bytes(encode_wav(audio))
            (root / f"{tid}.mid").write_bytes(encode_midi(score))
            lines.append(f"track {tid} audio={tid}.wav midi={tid}.mid label={label}")
            ids[label].append(tid)
    for u, label in enumerate(("positive", "medium", "negative", "positive")):
        order = list(ids[label])
        rng.shuffle(order)
        lines.append(f"session user{u} {','.join(order)}")
    manifest = root / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def monophonic_corpus(n_per_class: int = 4, seed: int = 0, beat: float = 0.25, sample_rate: int = SAMPLE_RATE) -> list:
    """In-memory ``(audio, score, label)`` triples of single-line melodies.

    Positive: a melody repeated (AA) with metrical velocities. Medium: the
    same with flat velocities and a jittered repeat. Negative: random pitches
    and velocities.
    """
    rng = np.random.default_rng(seed)
    meter = (100, 40, 70, 40)
    out = []
    for k in range(n_per_class):
        shift = int(rng.integers(-3, 4))
        base = [p + shift for p in (MELODY_A if k % 2 == 0 else MELODY_B)]
        pos = score_from_pitches(base + base, beat, [meter[i % 4] for i in range(2 * len(base))], bpm=60.0 / beat)
        jitter = [p + int(rng.integers(-2, 3)) for p in base]
        med = score_from_pitches(base + jitter, beat, [70] * (2 * len(base)), bpm=60.0 / beat)
        rand = [int(rng.integers(48, 84)) for _ in range(2 * len(base))]
        neg = score_from_pitches(rand, beat, [int(v) for v in rng.integers(20, 127, len(rand))], bpm=60.0 / beat)
        for label, score in (("positive", pos), ("medium", med), ("negative", neg)):
            out.append((render(score, sample_rate), score, label))
    return out
