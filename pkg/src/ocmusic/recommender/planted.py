"""Synthetic session sets with planted structure, and the aesthetic-fusion
ablation built on them."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .model import ModelConfig
from .train import ItemFeatures, TrainConfig, evaluate, train_recommender
from .vocab import N_RESERVED


def alternating_sessions(n_pairs: int = 10, per_pair: int = 4, seed: int = 0, length=(10, 20)):
    """Sessions alternating between two items of a pair, random phase and length.

    Returns ``(sessions, vocab_size)``.
    """
    rng = np.random.default_rng(seed)
    sessions = []
    for i in range(n_pairs):
        pair = (N_RESERVED + 2 * i, N_RESERVED + 2 * i + 1)
        for _ in range(per_pair):
            n = int(rng.integers(length[0], length[1] + 1))
            phase = int(rng.integers(2))
            sessions.append([pair[(k + phase) % 2] for k in range(n)])
    return sessions, N_RESERVED + 2 * n_pairs


def aesthetic_signal_sessions(n_classes: int = 4, warm_per_class: int = 60, cold_per_class: int = 10, n_train: int = 300,
                              n_test: int = 200, pairs: int = 4, noise: float = 0.05, seed: int = 0, constant_aes: bool = False):
    """Sessions ``x1 h1 x2 h2 ...`` where each hub ``h`` is fixed by the
    aesthetic class of the item before it.

    Training uses "warm" items; every test session ends with a "cold" item
    never seen in training followed by its hub, so only the aesthetic
    features of the cold item reveal the target. Returns
    ``(train_sessions, test_sessions, features, vocab_size)``.
    """
    rng = np.random.default_rng(seed)
    hubs = np.arange(N_RESERVED, N_RESERVED + n_classes)
    nxt = N_RESERVED + n_classes
    warm = [np.arange(nxt + c * warm_per_class, nxt + (c + 1) * warm_per_class) for c in range(n_classes)]
    nxt += n_classes * warm_per_class
    cold = [np.arange(nxt + c * cold_per_class, nxt + (c + 1) * cold_per_class) for c in range(n_classes)]
    V = nxt + n_classes * cold_per_class

    proto = np.full((n_classes, 4), 0.2)
    for c in range(n_classes):
        proto[c, c % 4] = 0.8
        if c >= 4:
            proto[c, (c + 1) % 4] = 0.8
    aes = np.zeros((V, 4))
    cls = np.full(V, -1)
    for c in range(n_classes):
        for group in (warm[c], cold[c], [hubs[c]]):
            idx = np.asarray(group)
            cls[idx] = c
            aes[idx] = np.clip(proto[c] + noise * rng.standard_normal((len(idx), 4)), 0.0, 1.0)
    if constant_aes:
        aes[N_RESERVED:] = 0.5

    def draw(pool):
        c = int(rng.integers(n_classes))
        return int(rng.choice(pool[c])), int(hubs[c])

    train = []
    for _ in range(n_train):
        s = []
        for _ in range(pairs):
            s.extend(draw(warm))
        train.append(s)
    test = []
    for _ in range(n_test):
        s = []
        for _ in range(pairs - 1):
            s.extend(draw(warm))
        s.extend(draw(cold))
        test.append(s)
    return train, test, ItemFeatures(aes=aes), V


def ablate_aesthetic_fusion(train_sessions, test_sessions, model_cfg: ModelConfig, config: TrainConfig | None = None,
                            features: ItemFeatures | None = None, ks=(1, 5, 10)) -> dict:
    """Train twins differing only in the aesthetic addend; report both and the deltas.

    Both twins share a seed, and parameters are drawn per tensor, so every
    shared tensor starts identical.
    """
    config = config or TrainConfig()
    out = {}
    for name, use in (("with_aes", True), ("without_aes", False)):
        cfg = replace(model_cfg, use_aes=use)
        params, curve = train_recommender(train_sessions, cfg, config, features)
        out[name] = evaluate(params, cfg, test_sessions, features, ks)
        out[name]["final_loss"] = curve[-1]
    out["delta"] = {k: out["with_aes"][k] - out["without_aes"][k] for k in out["with_aes"] if k != "final_loss"}
    return out
