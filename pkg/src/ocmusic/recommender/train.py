"""Masked-item training and leave-one-out evaluation."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigurationError, EmptyInputError, TrainingError
from ..optim import Adam, clip_global_norm
from .metrics import hr_ndcg, rank_of_target
from .model import Batch, ModelConfig, encode, init_params, loss_and_grads, no_decay, output_logits
from .vocab import MASK_ID, N_RESERVED, PAD_ID

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    rho: float = 0.4
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    clip: float = 5.0
    epochs: int = 10
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ConfigurationError("mask proportion must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ItemFeatures:
    """Per-id side information; rows for the reserved ids stay zero."""

    music: np.ndarray | None = None  # (V, m)
    aes: np.ndarray | None = None  # (V, 4)


# --------------------------------------------------------------------------
# batching and masking
# --------------------------------------------------------------------------


def pad_sequences(seqs, max_len: int) -> np.ndarray:
    """Right-pad to the longest sequence, keeping the most recent ``max_len``."""
    seqs = [list(s)[-max_len:] for s in seqs]
    if not seqs or any(len(s) == 0 for s in seqs):
        raise EmptyInputError("sessions must be non-empty")
    L = max(len(s) for s in seqs)
    ids = np.full((len(seqs), L), PAD_ID, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
    return ids


def mask_sessions(ids: np.ndarray, rho: float, seed=None):
    """Mask each non-padding position with probability ``rho``; sessions left
    without a mask get one at a uniformly drawn position.

    Returns ``(masked_ids, targets)``, targets being -1 where unmasked.
    """
    if not 0.0 < rho < 1.0:
        raise ConfigurationError("mask proportion must lie in (0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    ids = np.asarray(ids)
    valid = ids != PAD_ID
    mask = (rng.random(ids.shape) < rho) & valid
    for i in np.flatnonzero(~mask.any(axis=1)):
        pos = np.flatnonzero(valid[i])
        if len(pos):
            mask[i, pos[rng.integers(len(pos))]] = True
    masked = np.where(mask, MASK_ID, ids)
    targets = np.where(mask, ids, -1)
    return masked, targets


def make_batch(masked_ids: np.ndarray, original_ids: np.ndarray, features: ItemFeatures | None, cfg: ModelConfig) -> Batch:
    """Gather side features of the original items; zero them where masked or padded."""
    keep = (masked_ids != PAD_ID) & (masked_ids != MASK_ID)
    music = aes = None
    if cfg.music_dim:
        music = features.music[original_ids] * keep[..., None]
    if cfg.use_aes:
        aes = features.aes[original_ids] * keep[..., None]
    return Batch(masked_ids, music, aes)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def train_recommender(sessions, model_cfg: ModelConfig, config: TrainConfig | None = None, features: ItemFeatures | None = None, params=None):
    """AdamW with linear decay to 0, global-norm clipping, masked cross-entropy.

    ``sessions`` are lists of vocabulary ids. Returns ``(params, loss_curve)``
    with one loss per optimizer step.
    """
    config = config or TrainConfig()
    sessions = [list(s)[-model_cfg.max_len :] for s in sessions]
    if not sessions:
        raise EmptyInputError("no training sessions")
    for s in sessions:
        if any(not N_RESERVED <= i < model_cfg.vocab_size for i in s):
            raise TrainingError("session holds ids outside the vocabulary")
    params = init_params(model_cfg, config.seed) if params is None else params
    opt = Adam(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, weight_decay=0.0)
    rng = np.random.default_rng([config.seed, 1])
    n = len(sessions)
    per_epoch = int(np.ceil(n / config.batch_size))
    total = per_epoch * config.epochs
    curve = []
    step = 0
    for _epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            ids = pad_sequences([sessions[i] for i in idx], model_cfg.max_len)
            masked, targets = mask_sessions(ids, config.rho, rng)
            batch = make_batch(masked, ids, features, model_cfg)
            loss, grads = loss_and_grads(params, model_cfg, batch, targets)
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at step {step} (last finite: {curve[-3:]})")
            norm = clip_global_norm(grads, config.clip)
            if not np.isfinite(norm):
                raise TrainingError(f"non-finite gradient norm at step {step}")
            lr = config.lr * (1.0 - step / total)
            # decoupled decay, layer norms exempt
            if config.weight_decay:
                for k, p in params.items():
                    if not no_decay(k):
                        p -= lr * config.weight_decay * p
            opt.step(grads, lr=lr)
            curve.append(loss)
            step += 1
    return params, curve


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


def leave_one_out(sessions):
    """Training prefixes (all but the last item) and the untouched test sessions."""
    usable = [list(s) for s in sessions if len(s) >= 2]
    return [s[:-1] for s in usable], usable


def score_next(params, cfg: ModelConfig, prefixes, features: ItemFeatures | None = None, batch_size: int = 256) -> np.ndarray:
    """Logits for an appended [mask] after each prefix, shape (n, V)."""
    out = []
    for start in range(0, len(prefixes), batch_size):
        chunk = [list(p)[-(cfg.max_len - 1) :] + [MASK_ID] for p in prefixes[start : start + batch_size]]
        ids = pad_sequences(chunk, cfg.max_len)
        lengths = np.array([len(c) for c in chunk])
        batch = make_batch(ids, np.where(ids == MASK_ID, PAD_ID, ids), features, cfg)
        H = encode(params, cfg, batch)
        z, _ = output_logits(params, H[np.arange(len(chunk)), lengths - 1])
        out.append(z)
    return np.vstack(out)


def evaluate(params, cfg: ModelConfig, test_sessions, features: ItemFeatures | None = None, ks=(1, 5, 10)) -> dict:
    """HR@k / NDCG@k of the held-out final item of every test session."""
    test_sessions = [list(s) for s in test_sessions if len(s) >= 2]
    if not test_sessions:
        raise EmptyInputError("empty test set")
    Z = score_next(params, cfg, [s[:-1] for s in test_sessions], features)
    cand = np.arange(N_RESERVED, cfg.vocab_size)
    ranks = [rank_of_target(z, s[-1], cand) for z, s in zip(Z, test_sessions)]
    return hr_ndcg(ranks, ks)


def masked_accuracy(params, cfg: ModelConfig, sessions, features: ItemFeatures | None = None, rho: float = 0.4, seed: int = 0) -> float:
    """Fraction of randomly masked positions whose argmax item is correct."""
    ids = pad_sequences(sessions, cfg.max_len)
    masked, targets = mask_sessions(ids, rho, seed)
    H = encode(params, cfg, make_batch(masked, ids, features, cfg))
    sel = np.nonzero(targets >= 0)
    z, _ = output_logits(params, H[sel])
    z[:, :N_RESERVED] = -np.inf
    return float(np.mean(np.argmax(z, axis=1) == targets[sel]))
