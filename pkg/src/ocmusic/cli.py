"""Command-line interface.

Every subcommand writes ``key=value`` lines (or one JSON object per line with
``--json``) to ``--out`` or stdout. Exit status: 0 success, 1 data error,
2 usage error. ``OCMUSIC_CACHE_DIR`` enables a per-track feature cache keyed
by the input file bytes.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .aesthetic import distill as distill_mod
from .aesthetic import model as aes_model
from .aesthetic.train import TrainConfig as AesTrainConfig
from .aesthetic.train import ablate as ablate_heads
from .aesthetic.train import train as train_aesthetic
from .aesthetic.basic import FEATURE_NAMES, SYMBOLIC, BasicFeatureVector, extract_basic_features
from .errors import ModelFormatError, OcMusicError
from .features.harmony import StemSet
from .io_media import LABELS, DatasetManifest, read_manifest, read_midi, read_wav
from .recommender import checkpoint
from .recommender.metrics import REPORT_KEYS, hr_ndcg, rank_of_target
from .recommender.model import ModelConfig
from .recommender.planted import ablate_aesthetic_fusion
from .recommender.train import ItemFeatures, TrainConfig, evaluate, leave_one_out, score_next, train_recommender
from .recommender.vocab import N_RESERVED, Vocabulary

log = logging.getLogger("ocmusic")

CACHE_ENV = "OCMUSIC_CACHE_DIR"
FEATURE_CACHE_VERSION = 1
DEFAULT_SEED = 42


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return "na"
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "na" if not np.isfinite(v) else repr(float(v))
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v) if v else "-"
    return str(v)


class Writer:
    """Collects records and writes them as key=value or JSON lines."""

    def __init__(self, path, as_json: bool):
        self.path = path
        self.as_json = as_json
        self.lines = []

    def record(self, pairs: list[tuple[str, object]]):
        if self.as_json:
            obj = {}
            for k, v in pairs:
                if isinstance(v, float) and not np.isfinite(v):
                    v = None
                obj[k] = v
            self.lines.append(json.dumps(obj, sort_keys=False))
        else:
            self.lines.append(" ".join(f"{k}={_fmt(v)}" for k, v in pairs))

    def close(self):
        text = "".join(line + "\n" for line in self.lines)
        if self.path is None or str(self.path) == "-":
            sys.stdout.write(text)
        else:
            Path(self.path).write_text(text, encoding="utf-8")


# --------------------------------------------------------------------------
# manifests and features
# --------------------------------------------------------------------------


def _load_manifest(path) -> DatasetManifest:
    p = Path(path)
    if not p.is_file():
        raise OcMusicError(f"manifest not found: {p}")
    return read_manifest(p)


def _validate_paths(manifest: DatasetManifest, use_stems: bool = True):
    missing = []
    for t in manifest.tracks:
        paths = [t.audio_path] + ([t.midi_path] if t.midi_path else []) + (list(t.stem_paths) if use_stems else [])
        missing += [f"track {t.id}: {p}" for p in paths if not manifest.resolve(p).is_file()]
    if missing:
        raise OcMusicError("missing input files: " + "; ".join(missing))


def _cache_key(manifest, track, use_stems, pseudo) -> str:
    h = hashlib.sha256()
    h.update(f"v{FEATURE_CACHE_VERSION}|{__version__}|stems={use_stems}|pseudo={pseudo}".encode())
    paths = [track.audio_path, track.midi_path or ""] + (list(track.stem_paths) if use_stems else [])
    for p in paths:
        h.update(b"|")
        if p:
            h.update(manifest.resolve(p).read_bytes())
    return h.hexdigest()


def _extract_track(manifest, track, use_stems=True, pseudo=False) -> BasicFeatureVector:
    cache_dir = os.environ.get(CACHE_ENV)
    key = None
    if cache_dir:
        key = _cache_key(manifest, track, use_stems, pseudo)
        cached = Path(cache_dir) / f"{key}.json"
        if cached.is_file():
            d = json.loads(cached.read_text(encoding="utf-8"))
            vals = {n: (float("nan") if d["values"][n] is None else d["values"][n]) for n in FEATURE_NAMES}
            avail = {n: d["values"][n] is not None for n in FEATURE_NAMES}
            return BasicFeatureVector(vals, avail, frozenset(d["degraded"]))
    audio = read_wav(manifest.resolve(track.audio_path))
    midi = read_midi(manifest.resolve(track.midi_path)) if track.midi_path else None
    if midi is None and pseudo:
        midi = distill_mod.naive_transcribe(audio)
        if not midi.notes:
            midi = None
    stems = None
    if use_stems and track.stem_paths:
        stems = StemSet.from_buffers([read_wav(manifest.resolve(p)) for p in track.stem_paths], audio)
    feats = extract_basic_features(audio, midi, stems)
    if pseudo and not track.midi_path and midi is not None:
        feats = BasicFeatureVector(dict(feats.values), dict(feats.available), feats.degraded | SYMBOLIC)
    if key is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        (Path(cache_dir) / f"{key}.json").write_text(json.dumps(feats.to_dict(), sort_keys=True), encoding="utf-8")
    return feats


def extract_manifest(manifest, threads: int = 1, use_stems: bool = True, pseudo: bool = False):
    """``[(track, BasicFeatureVector | None, error | None)]`` in manifest order."""

    def work(track):
        try:
            return track, _extract_track(manifest, track, use_stems, pseudo), None
        except (OcMusicError, OSError, ValueError) as exc:
            return track, None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, manifest.tracks))
    return [work(t) for t in manifest.tracks]


def read_feature_table(path) -> dict:
    """Parse a ``features`` output file into ``{id: (label, BasicFeatureVector)}``."""
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.lstrip().startswith("{"):
            rec = json.loads(line)
        else:
            rec = dict(tok.split("=", 1) for tok in line.split())
        if "error" in rec:
            continue
        try:
            vals, avail = {}, {}
            for n in FEATURE_NAMES:
                v = rec[n]
                ok = v not in (None, "na")
                vals[n] = float(v) if ok else float("nan")
                avail[n] = ok
            degraded = rec.get("degraded", "-")
            if isinstance(degraded, str):
                degraded = [] if degraded == "-" else degraded.split(",")
            out[rec["id"]] = (rec["label"], BasicFeatureVector(vals, avail, frozenset(degraded)))
        except (KeyError, ValueError) as exc:
            raise OcMusicError(f"{path}: line {lineno}: malformed feature record ({exc})") from None
    return out


def _features_for(args, manifest) -> dict:
    """Features of every manifest track, from ``--features`` or by extraction."""
    if getattr(args, "features", None):
        table = read_feature_table(args.features)
        return {tid: fv for tid, (_label, fv) in table.items()}
    _validate_paths(manifest)
    return {t.id: fv for t, fv, err in extract_manifest(manifest, args.threads) if fv is not None}


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_features(args) -> int:
    manifest = _load_manifest(args.manifest)
    _validate_paths(manifest, not args.no_stems)
    rows = extract_manifest(manifest, args.threads, not args.no_stems, args.pseudo)
    w = Writer(args.out, args.json)
    failures = 0
    for track, fv, err in rows:
        if fv is None:
            failures += 1
            w.record([("id", track.id), ("label", track.label), ("error", err.replace(" ", "_"))])
            continue
        pairs = [("id", track.id), ("label", track.label)]
        pairs += [(n, fv.values[n] if fv.available[n] else None) for n in FEATURE_NAMES]
        pairs.append(("degraded", sorted(fv.degraded)))
        w.record(pairs)
    w.close()
    return 1 if rows and failures == len(rows) else 0


def _dataset(args):
    manifest = _load_manifest(args.manifest)
    feats = _features_for(args, manifest)
    data = [(feats[t.id], t.label) for t in manifest.tracks if t.id in feats]
    if not data:
        raise OcMusicError("no track has usable features")
    return data


def _aes_config(args) -> AesTrainConfig:
    return AesTrainConfig(lr=args.lr, iterations=args.iterations, seed=args.seed, head_lr=args.head_lr,
                                 head_iterations=args.head_iterations, finetune_heads=args.finetune_heads)


def _metric_pairs(prefix: str, m: dict):
    return [(f"{prefix}{k}", v) for k, v in m.items()]


def cmd_train_aes(args) -> int:
    data = _dataset(args)
    result = train_aesthetic(data, _aes_config(args))
    result.model.save(args.out)
    w = Writer(args.report, args.json)
    for split, m in result.metrics.items():
        w.record([("split", split)] + list(m.items()))
    w.close()
    return 0


def _load_aes_model(path) -> aes_model.AestheticModel:
    try:
        return aes_model.AestheticModel.load(path)
    except ModelFormatError as exc:
        raise OcMusicError(f"{path}: {exc} (this build reads {aes_model.FORMAT} version {aes_model.VERSION})") from None


def cmd_score(args) -> int:
    model = _load_aes_model(args.model)
    manifest = _load_manifest(args.manifest)
    feats = _features_for(args, manifest)
    scored, failed = [], []
    for t in manifest.tracks:
        if t.id not in feats:
            failed.append(t.id)
            continue
        try:
            aes, m, label = model.score(feats[t.id])
        except OcMusicError as exc:
            failed.append(t.id)
            log.warning("track %s: %s", t.id, exc)
            continue
        scored.append((m, t.id, aes, label))
    scored.sort(key=lambda r: (-r[0], r[1]))
    w = Writer(args.out, args.json)
    for rank, (m, tid, aes, label) in enumerate(scored, start=1):
        w.record([("rank", rank), ("id", tid), ("measure", m), ("H", aes.H), ("S", aes.S), ("C", aes.C), ("R", aes.R), ("class", label)])
    for tid in failed:
        w.record([("id", tid), ("error", "unscored")])
    w.close()
    return 0 if scored or not manifest.tracks else 1


def cmd_distill(args) -> int:
    model = _load_aes_model(args.model)
    manifest = _load_manifest(args.manifest)
    _validate_paths(manifest)
    aligned = []
    for t in manifest.tracks:
        if not t.midi_path:
            continue
        aligned.append((read_wav(manifest.resolve(t.audio_path)), read_midi(manifest.resolve(t.midi_path)), t.label))
    if not aligned:
        raise OcMusicError("distillation needs tracks with aligned MIDI")
    if args.transcriber == "identity":
        transcriber = distill_mod.identity_transcriber([(a, s) for a, s, _ in aligned])
    else:
        transcriber = distill_mod.naive_transcribe
    cfg = distill_mod.DistillConfig(lr=args.lr, steps=args.steps, lambda_r=args.lambda_r)
    result = distill_mod.distill_pseudo(aligned, transcriber, model, cfg)
    result.model.save(args.out)
    rep = result.report
    w = Writer(args.report, args.json)
    w.record([("n_tracks", rep["n_tracks"]), ("skipped", rep["skipped"]),
              ("loss_before", rep["loss_curve"][0]), ("loss_after", rep["loss_curve"][-1])])
    for h in aes_model.HEADS:
        w.record([("head", h), ("mse_before", rep["mse_before"][h]), ("mse_after", rep["mse_after"][h])])
    w.close()
    return 0


def _session_lists(manifest):
    return [list(s.items) for s in manifest.sessions]


def _item_features(args, manifest, vocab):
    """Music (z-scored basic features) and aesthetic tables for vocabulary ids."""
    if not args.model:
        return None, 0, False
    model = _load_aes_model(args.model)
    feats = _features_for(args, manifest)
    V = len(vocab)
    music = np.zeros((V, len(FEATURE_NAMES)))
    aes = np.zeros((V, 4))
    for tid, fv in feats.items():
        if tid in vocab.index:
            i = vocab.encode(tid)
            z, _ = model.normalizer.transform(fv.as_array())
            music[i] = z[0]
            aes[i] = model.aesthetic(fv).as_array()
    use_music = not args.no_music
    return ItemFeatures(music if use_music else None, aes), (len(FEATURE_NAMES) if use_music else 0), not getattr(args, "no_aes", False)


def _rec_configs(args, V, music_dim, use_aes):
    mcfg = ModelConfig(vocab_size=V, d=args.d, layers=args.layers, heads=args.heads, max_len=args.max_len,
                       music_dim=music_dim, use_aes=use_aes, music_encoder=args.music_encoder)
    lr = getattr(args, "rec_lr", None) or args.lr
    tcfg = TrainConfig(rho=args.rho, lr=lr, weight_decay=args.weight_decay, clip=args.clip,
                       epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    return mcfg, tcfg


def cmd_train_rec(args) -> int:
    manifest = _load_manifest(args.manifest)
    sessions = _session_lists(manifest)
    if not sessions:
        raise OcMusicError("manifest has no sessions")
    vocab = Vocabulary.from_sessions(sessions)
    features, music_dim, use_aes = _item_features(args, manifest, vocab)
    mcfg, tcfg = _rec_configs(args, len(vocab), music_dim, use_aes)
    train_prefixes, _ = leave_one_out([vocab.encode_session(s) for s in sessions])
    params, curve = train_recommender(train_prefixes, mcfg, tcfg, features)
    checkpoint.save(args.out, params, mcfg, tcfg, vocab, features)
    w = Writer(args.report, args.json)
    w.record([("steps", len(curve)), ("initial_loss", curve[0]), ("final_loss", curve[-1])])
    w.close()
    return 0


def _load_checkpoint(path):
    try:
        return checkpoint.load(path)
    except (ModelFormatError, OSError) as exc:
        raise OcMusicError(f"{path}: {exc} (this build reads checkpoint version {checkpoint.VERSION})") from None


def cmd_recommend(args) -> int:
    params, mcfg, _tcfg, vocab, features = _load_checkpoint(args.checkpoint)
    session = [s for s in args.session.split(",") if s]
    if not session:
        raise UsageError("--session needs at least one item")
    ids = vocab.encode_session(session)
    z = score_next(params, mcfg, [ids], features)[0]
    cand = np.arange(N_RESERVED, mcfg.vocab_size)
    if args.exclude_seen:
        cand = np.array([c for c in cand if c not in set(ids)], dtype=np.int64)
    order = sorted(cand.tolist(), key=lambda c: (-z[c], c))[: args.k]
    w = Writer(args.out, args.json)
    for rank, c in enumerate(order, start=1):
        w.record([("rank", rank), ("item", vocab.decode(c)), ("score", float(z[c]))])
    w.close()
    return 0


def _parse_ks(text) -> tuple:
    try:
        ks = tuple(sorted({int(k) for k in text.split(",") if k}))
    except ValueError:
        raise UsageError(f"bad --k list {text!r}") from None
    if not ks or min(ks) < 1:
        raise UsageError("--k values must be positive integers")
    return ks


def _report_keys(ks):
    return [f"HR@{k}" for k in ks] + [f"NDCG@{k}" for k in ks if k > 1]


def cmd_eval_rec(args) -> int:
    ks = _parse_ks(args.k)
    params, mcfg, _tcfg, vocab, features = _load_checkpoint(args.checkpoint)
    manifest = _load_manifest(args.manifest)
    sessions = [vocab.encode_session(s) for s in _session_lists(manifest)]
    metrics = evaluate(params, mcfg, sessions, features, ks)
    w = Writer(args.out, args.json)
    for key in _report_keys(ks):
        w.record([("metric", key), ("value", metrics[key])])
    w.close()
    return 0


def cmd_ablate(args) -> int:
    w = Writer(args.out, args.json)
    if args.kind == "aes":
        data = _dataset(args)
        cfg = _aes_config(args)
        drops = [d for d in (args.drop or "").split(";")] if args.drop is not None else ["", "H", "S", "C", "R"]
        for spec in drops:
            drop = [h for h in spec.split(",") if h]
            m = ablate_heads(data, cfg, drop)
            w.record([("drop", m.pop("drop"))] + list(m.items()))
    else:
        manifest = _load_manifest(args.manifest)
        sessions = _session_lists(manifest)
        vocab = Vocabulary.from_sessions(sessions)
        if not args.model:
            raise UsageError("ablate --kind rec needs --model for aesthetic features")
        features, music_dim, _ = _item_features(args, manifest, vocab)
        mcfg, tcfg = _rec_configs(args, len(vocab), music_dim, True)
        train_prefixes, test = leave_one_out([vocab.encode_session(s) for s in sessions])
        res = ablate_aesthetic_fusion(train_prefixes, test, mcfg, tcfg, features)
        for name in ("with_aes", "without_aes", "delta"):
            w.record([("variant", name)] + [(k, res[name][k]) for k in REPORT_KEYS if k in res[name]])
    w.close()
    return 0


def cmd_synth_corpus(args) -> int:
    from .synth import write_fixture_corpus

    manifest = write_fixture_corpus(args.out, args.n_per_class, args.seed)
    print(f"manifest={manifest}")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _common(p, out_required=False):
    p.add_argument("--out", required=out_required, help="output path ('-' or omitted: stdout)")
    p.add_argument("--json", action="store_true", help="emit one JSON object per line")
    p.add_argument("--threads", type=int, default=1, help="parallel per-track workers")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("-v", "--verbose", action="store_true")


def _aes_opts(p):
    p.add_argument("--lr", type=float, default=5e-5, help="quotient learning rate")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--head-lr", type=float, default=0.05)
    p.add_argument("--head-iterations", type=int, default=500)
    p.add_argument("--finetune-heads", action="store_true")


def _rec_opts(p):
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--max-len", type=int, default=50)
    p.add_argument("--rho", type=float, default=0.4)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--music-encoder", choices=("linear", "conv"), default="linear")
    p.add_argument("--model", help="aesthetic model supplying item features")
    p.add_argument("--features", help="feature table from 'features' (skips extraction)")
    p.add_argument("--no-aes", action="store_true", help="drop the aesthetic addend")
    p.add_argument("--no-music", action="store_true", help="drop the music-feature addend")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ocmusic", description="Aesthetic music features, scoring and recommendation.")
    ap.add_argument("--version", action="version", version=f"ocmusic {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="extract the ten basic features per track")
    p.add_argument("--manifest", required=True)
    p.add_argument("--no-stems", action="store_true", help="ignore stems, use band-split pseudo stems")
    p.add_argument("--pseudo", action="store_true", help="transcribe tracks without MIDI")
    _common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train-aes", help="train the aesthetic model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features")
    p.add_argument("--report", help="metrics output (default stdout)")
    _aes_opts(p)
    _common(p, out_required=True)
    p.set_defaults(func=cmd_train_aes)

    p = sub.add_parser("score", help="rank tracks by aesthetic measure")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--features")
    _common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("distill", help="distill heads for transcribed (pseudo) features")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--transcriber", choices=("naive", "identity"), default="naive")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--lambda-r", type=float, default=1.0)
    p.add_argument("--report")
    _common(p, out_required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("train-rec", help="train the sequential recommender")
    p.add_argument("--manifest", required=True)
    p.add_argument("--report")
    _rec_opts(p)
    _common(p, out_required=True)
    p.set_defaults(func=cmd_train_rec)

    p = sub.add_parser("recommend", help="rank next items for a session")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--session", required=True, help="comma-separated item ids")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--exclude-seen", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("eval-rec", help="leave-one-out HR/NDCG")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", default="1,5,10")
    _common(p)
    p.set_defaults(func=cmd_eval_rec)

    p = sub.add_parser("ablate", help="aesthetic-head or aesthetic-fusion ablation")
    p.add_argument("--kind", choices=("aes", "rec"), default="aes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--drop", help="';'-separated drop sets, each a comma list of H,S,C,R")
    _aes_opts(p)
    _rec_opts_ablate(p)
    _common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth-corpus", help="write the synthetic fixture corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_corpus)
    return ap


def _rec_opts_ablate(p):
    # --lr belongs to the aesthetic quotient here; the recommender gets --rec-lr
    p.add_argument("--rec-lr", type=float, default=1e-5)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--max-len", type=int, default=50)
    p.add_argument("--rho", type=float, default=0.4)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--music-encoder", choices=("linear", "conv"), default="linear")
    p.add_argument("--model")
    p.add_argument("--features")
    p.add_argument("--no-music", action="store_true")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (OcMusicError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
