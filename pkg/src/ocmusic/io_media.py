"""Decoding of WAV and Standard MIDI files, and dataset manifests.

Everything here is a pure function of its byte/text input.
"""
from __future__ import annotations

import bisect
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DecodeError, ManifestError, UnsupportedFormatError

LABELS = ("negative", "medium", "positive")
DEFAULT_BPM = 120.0


# --------------------------------------------------------------------------
# Audio
# --------------------------------------------------------------------------


@dataclass
class AudioBuffer:
    """Mono PCM audio in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int
    source_channels: int = 1

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio samples must be finite")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


_FMT_PCM = 1
_FMT_FLOAT = 3
_FMT_EXTENSIBLE = 0xFFFE


def _iter_chunks(data: bytes, start: int):
    pos = start
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise DecodeError(f"truncated {cid!r} chunk")
        yield cid, body
        pos += 8 + size + (size & 1)


def decode_wav(data: bytes) -> AudioBuffer:
    """Decode a RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.

    Stereo input is downmixed by the channel mean.
    """
    data = bytes(data)
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise DecodeError("not a RIFF/WAVE file")
    fmt = None
    payload = None
    for cid, body in _iter_chunks(data, 12):
        if cid == b"fmt ":
            if len(body) < 16:
                raise DecodeError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == _FMT_EXTENSIBLE:
                if len(body) < 26:
                    raise DecodeError("extensible fmt chunk too short")
                (sub,) = struct.unpack_from("<H", body, 24)
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            payload = body
    if fmt is None or payload is None:
        raise DecodeError("missing fmt or data chunk")
    codec, channels, rate, _, block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"{channels} channels")
    if rate <= 0:
        raise DecodeError("sample rate must be positive")
    if codec == _FMT_PCM and bits == 16:
        dtype = np.dtype("<i2")
    elif codec == _FMT_FLOAT and bits == 32:
        dtype = np.dtype("<f4")
    else:
        raise UnsupportedFormatError(f"codec {codec} with {bits}-bit samples")
    frame = dtype.itemsize * channels
    usable = len(payload) - len(payload) % frame
    raw = np.frombuffer(payload[:usable], dtype=dtype).reshape(-1, channels)
    if dtype.kind == "i":
        samples = raw.astype(np.float64) / 32768.0
    else:
        samples = raw.astype(np.float64)
        if not np.all(np.isfinite(samples)):
            raise DecodeError("non-finite float samples")
        samples = np.clip(samples, -1.0, 1.0)
    return AudioBuffer(samples.mean(axis=1), rate, channels)


def encode_wav(audio: AudioBuffer, sample_format: str = "pcm16") -> bytes:
    """Write mono audio as a WAV file (``pcm16`` or ``float32``)."""
    x = np.clip(audio.samples, -1.0, 1.0)
    if sample_format == "pcm16":
        codec, bits = _FMT_PCM, 16
        body = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
    elif sample_format == "float32":
        codec, bits = _FMT_FLOAT, 32
        body = x.astype("<f4").tobytes()
    else:
        raise ValueError(f"unknown sample format {sample_format!r}")
    block = bits // 8
    fmt = struct.pack("<HHIIHH", codec, 1, audio.sample_rate, audio.sample_rate * block, block, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(body)) + body
    if len(body) & 1:
        chunks += b"\x00"
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def read_wav(path) -> AudioBuffer:
    return decode_wav(Path(path).read_bytes())


# --------------------------------------------------------------------------
# MIDI
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Note:
    onset: float
    duration: float
    pitch: int
    velocity: int
    channel: int = 0

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass
class MidiScore:
    """Timed notes plus tempo and time-signature maps, all in seconds."""

    notes: list[Note] = field(default_factory=list)
    tempo_map: list[tuple[float, float]] = field(default_factory=lambda: [(0.0, DEFAULT_BPM)])
    time_signatures: list[tuple[float, int, int]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.notes = sorted(self.notes, key=lambda n: (n.onset, n.pitch, n.channel))
        for n in self.notes:
            if not n.duration > 0:
                raise ValueError("note duration must be positive")
            if not (0 <= n.pitch <= 127 and 0 <= n.velocity <= 127 and 0 <= n.channel <= 15):
                raise ValueError(f"note out of MIDI range: {n}")
        tempo = sorted(self.tempo_map)
        if not tempo or tempo[0][0] > 0:
            tempo.insert(0, (0.0, DEFAULT_BPM))
        self.tempo_map = tempo
        self.time_signatures = sorted(self.time_signatures)

    @property
    def end_time(self) -> float:
        return max((n.end for n in self.notes), default=0.0)

    def _segments(self):
        # (start seconds, start beats, bpm) per tempo segment
        segs = []
        beats = 0.0
        for k, (t, bpm) in enumerate(self.tempo_map):
            if k:
                t0, _, bpm0 = segs[-1]
                beats += (t - t0) * bpm0 / 60.0
            segs.append((t, beats, bpm))
        return segs

    def seconds_to_beats(self, t: float) -> float:
        """Quarter-note position of time ``t``."""
        segs = self._segments()
        k = bisect.bisect_right([s[0] for s in segs], t) - 1
        t0, b0, bpm = segs[max(k, 0)]
        return b0 + (t - t0) * bpm / 60.0

    def beats_to_seconds(self, b: float) -> float:
        """Time of quarter-note position ``b``."""
        segs = self._segments()
        k = bisect.bisect_right([s[1] for s in segs], b) - 1
        t0, b0, bpm = segs[max(k, 0)]
        return t0 + (b - b0) * 60.0 / bpm


def _read_vlq(data: bytes, pos: int) -> tuple[int, int]:
    value = 0
    for _ in range(4):
        if pos >= len(data):
            raise DecodeError("truncated variable-length quantity")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise DecodeError("variable-length quantity longer than 4 bytes")


_DATA_BYTES = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


def _parse_track(body: bytes, order: int):
    """Yield (tick, order, seq, kind, payload) tuples for one MTrk chunk."""
    events = []
    pos = 0
    tick = 0
    status = None
    seq = 0
    while pos < len(body):
        delta, pos = _read_vlq(body, pos)
        tick += delta
        if pos >= len(body):
            raise DecodeError("truncated event")
        byte = body[pos]
        if byte == 0xFF:
            if pos + 2 > len(body):
                raise DecodeError("truncated meta event")
            mtype = body[pos + 1]
            length, pos = _read_vlq(body, pos + 2)
            meta = body[pos : pos + length]
            if len(meta) < length:
                raise DecodeError("truncated meta event")
            pos += length
            if mtype == 0x51 and length == 3:
                events.append((tick, order, seq, "tempo", int.from_bytes(meta, "big")))
            elif mtype == 0x58 and length >= 2:
                events.append((tick, order, seq, "timesig", (meta[0], 2 ** meta[1])))
            elif mtype == 0x2F:
                events.append((tick, order, seq, "end", None))
                break
            seq += 1
            continue
        if byte in (0xF0, 0xF7):
            length, pos = _read_vlq(body, pos + 1)
            if pos + length > len(body):
                raise DecodeError("truncated sysex event")
            pos += length
            status = None
            continue
        if byte & 0x80:
            status = byte
            pos += 1
        elif status is None:
            raise DecodeError("running status without a prior status byte")
        kind = status & 0xF0
        nbytes = _DATA_BYTES.get(kind)
        if nbytes is None:
            raise DecodeError(f"unexpected status byte 0x{status:02X}")
        args = body[pos : pos + nbytes]
        if len(args) < nbytes:
            raise DecodeError("truncated channel event")
        pos += nbytes
        channel = status & 0x0F
        if kind == 0x90 and args[1] > 0:
            events.append((tick, order, seq, "on", (channel, args[0], args[1])))
        elif kind == 0x80 or kind == 0x90:
            events.append((tick, order, seq, "off", (channel, args[0])))
        else:
            events.append((tick, order, seq, "other", None))
        seq += 1
    return events, tick


def parse_midi(data: bytes) -> MidiScore:
    """Parse a format 0 or 1 Standard MIDI File.

    Note-on/note-off pairs are matched first-in first-out per
    ``(channel, pitch)``; a note-on with velocity 0 is a note-off. Notes still
    open at the end of the file are closed at the last event time and a
    warning is recorded on the returned score.
    """
    data = bytes(data)
    if len(data) < 14 or data[:4] != b"MThd":
        raise DecodeError("missing MThd header")
    (hlen,) = struct.unpack_from(">I", data, 4)
    if hlen < 6 or len(data) < 8 + hlen:
        raise DecodeError("truncated header chunk")
    fmt, ntracks, division = struct.unpack_from(">HHH", data, 8)
    if fmt not in (0, 1):
        raise UnsupportedFormatError(f"SMF format {fmt}")
    if division & 0x8000:
        raise UnsupportedFormatError("SMPTE time division")
    ppq = division
    if ppq == 0:
        raise DecodeError("zero ticks per quarter note")
    pos = 8 + hlen
    events = []
    last_tick = 0
    found = 0
    while pos + 8 <= len(data) and found < ntracks:
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from(">I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise DecodeError(f"truncated {cid!r} chunk")
        pos += 8 + size
        if cid != b"MTrk":
            continue
        track_events, end_tick = _parse_track(body, found)
        events.extend(track_events)
        last_tick = max(last_tick, end_tick)
        found += 1
    if found < ntracks:
        raise DecodeError(f"expected {ntracks} tracks, found {found}")
    events.sort(key=lambda e: (e[0], e[1], e[2]))

    # tempo map in ticks, then a tick -> seconds conversion
    tempo_ticks = [(0, 500000)]
    for tick, _, _, kind, payload in events:
        if kind == "tempo":
            if tick == tempo_ticks[-1][0]:
                tempo_ticks[-1] = (tick, payload)
            else:
                tempo_ticks.append((tick, payload))
    seg_seconds = [0.0]
    for k in range(1, len(tempo_ticks)):
        t0, us = tempo_ticks[k - 1]
        seg_seconds.append(seg_seconds[-1] + (tempo_ticks[k][0] - t0) * us / (ppq * 1e6))
    seg_starts = [t for t, _ in tempo_ticks]

    def to_seconds(tick: int) -> float:
        k = bisect.bisect_right(seg_starts, tick) - 1
        return seg_seconds[k] + (tick - seg_starts[k]) * tempo_ticks[k][1] / (ppq * 1e6)

    tempo_map = [(to_seconds(t), 60e6 / us) for t, us in tempo_ticks]
    time_signatures = []
    open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}
    pairs = []
    for tick, _, _, kind, payload in events:
        if kind == "timesig":
            time_signatures.append((to_seconds(tick), int(payload[0]), int(payload[1])))
        elif kind == "on":
            channel, pitch, velocity = payload
            open_notes.setdefault((channel, pitch), []).append((tick, velocity))
        elif kind == "off":
            queue = open_notes.get(payload)
            if queue:
                start, velocity = queue.pop(0)
                pairs.append((start, tick, payload[1], velocity, payload[0]))
    warnings = []
    unclosed = 0
    for (channel, pitch), queue in open_notes.items():
        for start, velocity in queue:
            pairs.append((start, last_tick, pitch, velocity, channel))
            unclosed += 1
    if unclosed:
        warnings.append(f"unclosed_notes={unclosed}")
    notes = []
    dropped = 0
    for start, stop, pitch, velocity, channel in pairs:
        onset = to_seconds(start)
        duration = to_seconds(stop) - onset
        if duration <= 0:
            dropped += 1
            continue
        notes.append(Note(onset, duration, pitch, velocity, channel))
    if dropped:
        warnings.append(f"zero_length_notes={dropped}")
    return MidiScore(notes, tempo_map, time_signatures, warnings)


def read_midi(path) -> MidiScore:
    return parse_midi(Path(path).read_bytes())


def _vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def encode_midi(score: MidiScore, ppq: int = 480) -> bytes:
    """Write a score as a format-0 SMF (tempo, meter and note events)."""

    def to_ticks(t: float) -> int:
        return int(round(score.seconds_to_beats(t) * ppq))

    events = []
    for t, bpm in score.tempo_map:
        us = int(round(60e6 / bpm))
        events.append((to_ticks(t), 0, b"\xff\x51\x03" + us.to_bytes(3, "big")))
    for t, num, den in score.time_signatures:
        events.append((to_ticks(t), 0, bytes([0xFF, 0x58, 0x04, num, int(den).bit_length() - 1, 24, 8])))
    for n in score.notes:
        events.append((to_ticks(n.onset), 2, bytes([0x90 | n.channel, n.pitch, max(n.velocity, 1)])))
        events.append((to_ticks(n.end), 1, bytes([0x80 | n.channel, n.pitch, 0])))
    events.sort(key=lambda e: (e[0], e[1]))
    track = bytearray()
    now = 0
    for tick, _, msg in events:
        track += _vlq(tick - now) + msg
        now = tick
    track += b"\x00\xff\x2f\x00"
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, ppq)
    return header + b"MTrk" + struct.pack(">I", len(track)) + bytes(track)


# --------------------------------------------------------------------------
# Manifests
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrackRecord:
    id: str
    audio_path: str
    label: str
    midi_path: str | None = None
    stem_paths: tuple[str, ...] = ()


@dataclass(frozen=True)
class SessionRecord:
    user: str
    items: tuple[str, ...]
    timestamps: tuple[float | None, ...]


@dataclass
class DatasetManifest:
    tracks: list[TrackRecord] = field(default_factory=list)
    sessions: list[SessionRecord] = field(default_factory=list)
    base_dir: Path | None = None

    def class_counts(self) -> dict[str, int]:
        counts = {label: 0 for label in LABELS}
        for t in self.tracks:
            counts[t.label] += 1
        return counts

    def track(self, track_id: str) -> TrackRecord:
        for t in self.tracks:
            if t.id == track_id:
                return t
        raise KeyError(track_id)

    def resolve(self, path: str) -> Path:
        """Resolve a manifest path relative to the manifest's directory."""
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p


def load_manifest(text: str, base_dir=None) -> DatasetManifest:
    """Parse the line-oriented manifest format.

    ::

        track <id> audio=<path> [midi=<path>] [stems=<path,..>] label=<negative|medium|positive>
        session <user-id> <track-id[@time],track-id[@time],...>

    ``#`` starts a comment. Paths are stored as written; nothing is opened.
    """
    tracks = []
    sessions = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        if kind == "track":
            if len(parts) < 2 or "=" in parts[1]:
                raise ManifestError("track record needs an id", lineno)
            tid = parts[1]
            if tid in seen:
                raise ManifestError(f"duplicate track id {tid!r}", lineno)
            fields = {}
            for token in parts[2:]:
                key, sep, value = token.partition("=")
                if not sep or not value:
                    raise ManifestError(f"malformed field {token!r}", lineno)
                if key not in ("audio", "midi", "stems", "label"):
                    raise ManifestError(f"unknown field {key!r}", lineno)
                if key in fields:
                    raise ManifestError(f"repeated field {key!r}", lineno)
                fields[key] = value
            if "audio" not in fields:
                raise ManifestError(f"track {tid!r} has no audio path", lineno)
            label = fields.get("label")
            if label not in LABELS:
                raise ManifestError(f"unknown label {label!r}", lineno)
            stems = tuple(s for s in fields.get("stems", "").split(",") if s)
            tracks.append(TrackRecord(tid, fields["audio"], label, fields.get("midi"), stems))
            seen.add(tid)
        elif kind == "session":
            if len(parts) != 3:
                raise ManifestError("session record is 'session <user> <id,id,...>'", lineno)
            items = []
            stamps = []
            for token in parts[2].split(","):
                if not token:
                    raise ManifestError("empty item in session", lineno)
                item, sep, stamp = token.partition("@")
                if sep:
                    try:
                        stamps.append(float(stamp))
                    except ValueError:
                        raise ManifestError(f"bad timestamp {stamp!r}", lineno) from None
                else:
                    stamps.append(None)
                items.append(item)
            if len(items) < 2:
                raise ManifestError("session shorter than 2 items", lineno)
            sessions.append(SessionRecord(parts[1], tuple(items), tuple(stamps)))
        else:
            raise ManifestError(f"unknown record type {kind!r}", lineno)
    return DatasetManifest(tracks, sessions, Path(base_dir) if base_dir is not None else None)


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    return load_manifest(path.read_text(encoding="utf-8"), base_dir=path.parent)
