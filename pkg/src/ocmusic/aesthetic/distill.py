"""Pseudo-feature distillation for audio without aligned MIDI.

A transcriber turns audio into a pseudo score; the symbolic features computed
from it feed a copy of the heads, which is then tuned so its aesthetic
features and measure track the ground-truth pipeline.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import dsp
from ..errors import OcMusicError, TooShortError
from ..features import complexity
from ..io_media import AudioBuffer, MidiScore, Note
from ..optim import Adam
from .basic import extract_basic_features
from .model import GROUP_INDEX, HEADS, AestheticModel, LRHeadParams, head_outputs, order_complexity

log = logging.getLogger(__name__)

F0_RANGE = (50.0, 2000.0)
SILENCE_DB = -40.0


# --------------------------------------------------------------------------
# transcription
# --------------------------------------------------------------------------


def frame_f0(frame: np.ndarray, sample_rate: int, fmin: float = F0_RANGE[0], fmax: float = F0_RANGE[1]) -> float:
    """Autocorrelation pitch of one frame, ``nan`` if unvoiced."""
    x = frame - frame.mean()
    n = len(x)
    F = np.fft.rfft(x, 2 * n)
    r = np.fft.irfft(F * np.conj(F))[:n]
    if r[0] <= 0:
        return float("nan")
    lo = max(1, int(sample_rate / fmax))
    hi = min(n - 2, int(sample_rate / fmin))
    if hi <= lo:
        return float("nan")
    k = lo + int(np.argmax(r[lo : hi + 1]))
    if r[k] / r[0] < 0.3:
        return float("nan")
    # parabolic refinement of the peak
    a, b, c = r[k - 1], r[k], r[k + 1]
    denom = a - 2 * b + c
    shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    return sample_rate / (k + float(np.clip(shift, -0.5, 0.5)))


def hz_to_midi(f: float) -> int:
    return int(np.round(69.0 + 12.0 * np.log2(f / 440.0)))


@dataclass
class Transcription:
    score: MidiScore
    flags: list = field(default_factory=list)


def transcribe(audio: AudioBuffer, delta: float = 0.1) -> Transcription:
    """Monophonic transcription: flux onsets, median autocorrelation pitch
    per inter-onset segment, velocity from RMS.

    Flux peaks where the frame energy does not rise are taken as note
    releases and ignored.
    """
    empty = Transcription(MidiScore([], [(0.0, 120.0)], []), ["no_onsets"])
    try:
        spec = dsp.stft(audio)
    except TooShortError:
        return empty
    hop, n_fft, sr = spec.hop_size, spec.frame_size, audio.sample_rate
    fr = dsp.frames(audio.samples, n_fft, hop)
    rms = np.sqrt(np.mean(fr**2, axis=1))
    peak = rms.max() if len(rms) else 0.0
    if peak <= 0:
        return empty
    loud = 20 * np.log10(np.maximum(rms, 1e-12) / peak) > SILENCE_DB
    picks = list(complexity.pick_peaks(complexity.onset_strength(spec), delta))
    picks = [p for p in picks if loud[min(p + 1, len(loud) - 1)] or loud[p]]
    # releases also splatter flux; a note onset must raise the frame energy
    picks = [p for p in picks if p == 0 or rms[p : p + 3].max() > rms[p - 1]]
    if not picks:
        return empty
    window = dsp.hann(n_fft)
    notes = []
    bounds = picks + [len(rms)]
    for a, b in zip(bounds[:-1], bounds[1:]):
        seg = np.arange(a, b)
        seg = seg[loud[seg]]
        if len(seg) == 0:
            continue
        f0s = np.array([frame_f0(fr[t] * window, sr) for t in seg])
        f0s = f0s[np.isfinite(f0s)]
        if len(f0s) == 0:
            continue
        pitch = int(np.clip(hz_to_midi(float(np.median(f0s))), 0, 127))
        onset = (a * hop + n_fft / 2) / sr if a > 0 else 0.0
        end = (seg[-1] * hop + n_fft / 2) / sr
        if end <= onset:
            end = onset + hop / sr
        velocity = int(np.clip(round(127 * np.sqrt(rms[seg].mean() / peak)), 1, 127))
        notes.append(Note(onset, end - onset, pitch, velocity))
    if not notes:
        return empty
    notes.sort(key=lambda n: n.onset)
    for i in range(len(notes) - 1):  # keep the line monophonic
        if notes[i].end > notes[i + 1].onset:
            n = notes[i]
            notes[i] = Note(n.onset, max(notes[i + 1].onset - n.onset, 1e-3), n.pitch, n.velocity)
    return Transcription(MidiScore(notes, [(0.0, 120.0)], []))


def naive_transcribe(audio: AudioBuffer) -> MidiScore:
    """Score-only form of :func:`transcribe`; silence gives an empty score."""
    return transcribe(audio).score


def identity_transcriber(mapping):
    """Transcriber returning the true score for each audio buffer (looked up by identity)."""
    table = {id(a): s for a, s in mapping}

    def run(audio):
        return table[id(audio)]

    return run


# --------------------------------------------------------------------------
# distillation
# --------------------------------------------------------------------------


@dataclass
class DistillConfig:
    lr: float = 0.01
    steps: int = 100
    lambda_r: float = 1.0


@dataclass
class DistillResult:
    model: AestheticModel  # ground-truth normalizer/quotient with the distilled heads
    report: dict


def distill_loss(heads: dict, Zp: np.ndarray, A_gt: np.ndarray, m_gt: np.ndarray, model: AestheticModel, lambda_r: float):
    """Mean of ||A_gt - A_p||^2 + lambda_r (m_gt - m_p)^2 and its head gradients."""
    A = head_outputs(Zp, heads)
    num, den = order_complexity(A, model.oc)
    m = num / den
    n = len(A)
    diff = A - A_gt
    dm = m - m_gt
    loss = float(np.mean(np.sum(diff**2, axis=1) + lambda_r * dm**2))
    w = model.oc.omega
    dm_dA = np.stack([w[0] / den, w[1] / den, -num * w[2] / den**2, -num * w[3] / den**2], axis=1)
    dA = (2.0 * diff + 2.0 * lambda_r * dm[:, None] * dm_dA) / n
    grads = {}
    for k, h in enumerate(HEADS):
        dlogit = dA[:, k] * A[:, k] * (1.0 - A[:, k])
        grads[f"w_{h}"] = Zp[:, GROUP_INDEX[h]].T @ dlogit
        grads[f"b_{h}"] = np.array(dlogit.sum())
    return loss, grads


def _per_head_mse(A, A_gt) -> dict:
    return {h: float(np.mean((A[:, k] - A_gt[:, k]) ** 2)) for k, h in enumerate(HEADS)}


def distill_pseudo(aligned, transcriber, model: AestheticModel, config: DistillConfig | None = None, extractor=extract_basic_features) -> DistillResult:
    """Tune a copy of the heads on pseudo features from ``transcriber(audio)``.

    ``aligned`` holds ``(audio, midi, label)`` triples. Tracks whose
    transcription raises or comes back empty are skipped and counted.
    """
    config = config or DistillConfig()
    gt_rows, ps_rows, skipped = [], [], 0
    for audio, midi, _label in aligned:
        try:
            pseudo = transcriber(audio)
            if pseudo is None or not pseudo.notes:
                raise OcMusicError("empty transcription")
        except Exception as exc:  # transcribers are user code
            log.info("skipping track: %s", exc)
            skipped += 1
            continue
        gt_rows.append(extractor(audio, midi).as_array())
        ps_rows.append(extractor(audio, pseudo).as_array())
    if not gt_rows:
        raise OcMusicError("no track survived transcription")
    Zg, _ = model.normalizer.transform(np.vstack(gt_rows))
    Zp, _ = model.normalizer.transform(np.vstack(ps_rows))
    A_gt = head_outputs(Zg, model.heads)
    num, den = order_complexity(A_gt, model.oc)
    m_gt = num / den

    params = {}
    for h in HEADS:
        params[f"w_{h}"] = model.heads[h].weights.copy()
        params[f"b_{h}"] = np.array(model.heads[h].bias)
    opt = Adam(params, lr=config.lr)

    def current():
        return {h: LRHeadParams(params[f"w_{h}"].copy(), float(params[f"b_{h}"])) for h in HEADS}

    before = _per_head_mse(head_outputs(Zp, model.heads), A_gt)
    curve = []
    for _ in range(config.steps):
        loss, grads = distill_loss(current(), Zp, A_gt, m_gt, model, config.lambda_r)
        curve.append(loss)
        opt.step(grads)
    heads = current()
    final, _ = distill_loss(heads, Zp, A_gt, m_gt, model, config.lambda_r)
    curve.append(final)
    report = {
        "n_tracks": len(gt_rows),
        "skipped": skipped,
        "mse_before": before,
        "mse_after": _per_head_mse(head_outputs(Zp, heads), A_gt),
        "loss_curve": curve,
    }
    distilled = AestheticModel(model.normalizer, heads, model.oc, {**model.metadata, "distilled": True})
    return DistillResult(distilled, report)
