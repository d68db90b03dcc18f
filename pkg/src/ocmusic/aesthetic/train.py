"""Two-stage training of the aesthetic model and head ablation.

Stage 1 fits each logistic head on positive-vs-negative cross-entropy over
its feature group. Stage 2 fits the quotient weights and the two ordinal
thresholds on 3-class cumulative-logit cross-entropy with the heads frozen
(or jointly, with ``finetune_heads``).
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigurationError, TrainingError
from ..io_media import LABELS
from ..optim import Adam
from .basic import FEATURE_NAMES, BasicFeatureVector
from .model import (
    DENOM_GUARD,
    GROUP_INDEX,
    HEADS,
    AestheticModel,
    FeatureNormalizer,
    LRHeadParams,
    OCParams,
    classify_codes,
    config_hash,
    head_outputs,
    order_complexity,
    sigmoid,
)

log = logging.getLogger(__name__)

LABEL_CODE = {name: k for k, name in enumerate(LABELS)}
ORDINAL_TARGET = np.array([0.0, 0.5, 1.0])
PROB_FLOOR = 1e-12
TAU_GAP = 1e-6


@dataclass
class TrainConfig:
    lr: float = 5e-5
    iterations: int = 1000
    seed: int = 0
    head_lr: float = 0.05
    head_iterations: int = 500
    head_l2: float = 1e-2
    test_fraction: float = 0.3
    finetune_heads: bool = False


# --------------------------------------------------------------------------
# data plumbing
# --------------------------------------------------------------------------


def as_arrays(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``[(BasicFeatureVector | array, label), ...]`` into (X, y codes)."""
    rows, codes = [], []
    for feats, label in dataset:
        rows.append(feats.as_array() if isinstance(feats, BasicFeatureVector) else np.asarray(feats, dtype=np.float64))
        if label not in LABEL_CODE:
            raise TrainingError(f"unknown label {label!r}")
        codes.append(LABEL_CODE[label])
    if not rows:
        raise TrainingError("empty dataset")
    return np.vstack(rows), np.array(codes, dtype=np.int64)


def stratified_split(y: np.ndarray, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled split; every class with >= 2 members lands in both parts."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        n_test = int(round(test_fraction * len(idx)))
        if len(idx) >= 2:
            n_test = min(max(n_test, 1), len(idx) - 1)
        else:
            n_test = 0
        test.extend(idx[:n_test])
        train.extend(idx[n_test:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    return float(np.mean(y_true == y_pred)) if len(y_true) else float("nan")


def macro_f1(y_true, y_pred) -> float:
    """Unweighted mean F1 over the classes seen in either array."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    scores = []
    for c in np.union1d(y_true, y_pred):
        tp = np.sum((y_true == c) & (y_pred == c))
        fp = np.sum((y_true != c) & (y_pred == c))
        fn = np.sum((y_true == c) & (y_pred != c))
        scores.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores)) if scores else float("nan")


# --------------------------------------------------------------------------
# stage 1: logistic heads
# --------------------------------------------------------------------------


def _head_targets(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows and targets for the head pre-training task.

    Positive vs negative when both exist; otherwise every row with its
    ordinal target in {0, 0.5, 1} (soft labels).
    """
    present = set(np.unique(y).tolist())
    if {0, 2} <= present:
        rows = np.flatnonzero(y != 1)
        return rows, (y[rows] == 2).astype(np.float64)
    rows = np.arange(len(y))
    return rows, ORDINAL_TARGET[y]


def bce_head_loss(params: dict, Z: np.ndarray, t: np.ndarray, l2: float = 0.0):
    """Mean binary cross-entropy of ``sigmoid(Z w + b)`` against ``t``, with gradients."""
    logit = Z @ params["w"] + params["b"]
    p = sigmoid(logit)
    # log(1 + e^x) computed stably
    loss = np.mean(np.logaddexp(0.0, logit) - t * logit) + 0.5 * l2 * float(params["w"] @ params["w"])
    r = (p - t) / len(t)
    return float(loss), {"w": Z.T @ r + l2 * params["w"], "b": np.array(r.sum())}


def train_heads(Z: np.ndarray, y: np.ndarray, config: TrainConfig) -> tuple[dict, dict]:
    rows, t = _head_targets(y)
    heads, losses = {}, {}
    for h in HEADS:
        Zh = Z[rows][:, GROUP_INDEX[h]]
        params = {"w": np.zeros(Zh.shape[1]), "b": np.zeros(())}
        opt = Adam(params, lr=config.head_lr)
        loss = float("nan")
        for _ in range(config.head_iterations):
            loss, grads = bce_head_loss(params, Zh, t, config.head_l2)
            opt.step(grads)
        heads[h] = LRHeadParams(params["w"].copy(), float(params["b"]))
        losses[h] = loss
    return heads, losses


# --------------------------------------------------------------------------
# stage 2: ordinal cross-entropy over the quotient
# --------------------------------------------------------------------------


def ordinal_probabilities(m: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Cumulative-logit class probabilities, P(y <= k) = sigmoid(tau_k - m)."""
    a = sigmoid(tau[0] - m)
    b = sigmoid(tau[1] - m)
    return np.stack([a, b - a, 1.0 - b], axis=1)


def ordinal_loss(omega, theta, tau, A: np.ndarray, y: np.ndarray, want_grad: bool = True):
    """Mean 3-class ordinal cross-entropy of the quotient and its gradients.

    Returns ``(loss, grads)`` where grads has keys omega, theta, tau and A
    (the last one per row, for fine-tuning the heads).
    """
    w = omega
    num = w[0] * A[:, 0] + w[1] * A[:, 1] + theta[0]
    den = w[2] * A[:, 2] + w[3] * A[:, 3] + theta[1]
    m = num / den
    a = sigmoid(tau[0] - m)
    b = sigmoid(tau[1] - m)
    n = len(y)
    p = np.choose(y, [a, b - a, 1.0 - b])
    loss = float(-np.mean(np.log(np.maximum(p, PROB_FLOOR))))
    if not want_grad:
        return loss, None
    da, db = a * (1 - a), b * (1 - b)
    mid = np.maximum(b - a, PROB_FLOOR)
    dm = np.choose(y, [1.0 - a, (db - da) / mid, -b])
    dt1 = np.choose(y, [-(1.0 - a), da / mid, np.zeros(n)])
    dt2 = np.choose(y, [np.zeros(n), -db / mid, b])
    dm /= n
    dnum = dm / den
    dden = -dm * num / den**2
    grads = {
        "omega": np.array([dnum @ A[:, 0], dnum @ A[:, 1], dden @ A[:, 2], dden @ A[:, 3]]),
        "theta": np.array([dnum.sum(), dden.sum()]),
        "tau": np.array([dt1.sum() / n, dt2.sum() / n]),
        "A": np.stack([dnum * w[0], dnum * w[1], dden * w[2], dden * w[3]], axis=1),
    }
    return loss, grads


def init_thresholds(m: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Split points between consecutive classes maximizing training accuracy.

    Candidates are midpoints between distinct sorted measures (plus one
    below the minimum and one above the maximum); the best pair is found in
    one pass over prefix class counts. Ties keep the lowest thresholds. Both
    thresholds may share a candidate, leaving the medium band empty.
    """
    order = np.argsort(m, kind="stable")
    ms, ys = m[order], y[order]
    n = len(ms)
    cuts = [0] + [i for i in range(1, n) if ms[i] > ms[i - 1]] + [n]
    values = [ms[0] - 1.0] + [0.5 * (ms[i] + ms[i - 1]) for i in cuts[1:-1]] + [ms[-1] + 1.0]
    neg = np.concatenate([[0], np.cumsum(ys == 0)])
    med = np.concatenate([[0], np.cumsum(ys == 1)])
    pos = np.concatenate([[0], np.cumsum(ys == 2)])
    best, best_pair = -1, (0, 0)
    run, run_i = None, 0
    for j in range(len(cuts)):
        cand = neg[cuts[j]] - med[cuts[j]]
        if run is None or cand > run:
            run, run_i = cand, j
        score = run + med[cuts[j]] + pos[n] - pos[cuts[j]]
        if score > best:
            best, best_pair = score, (run_i, j)
    lo, hi = values[best_pair[0]], values[best_pair[1]]
    if hi <= lo:  # empty medium band; no measure lies this close to a midpoint
        hi = np.nextafter(lo, np.inf)
    return np.array([lo, hi], dtype=np.float64)


def _project(params: dict, A: np.ndarray, active: np.ndarray) -> None:
    params["omega"][~active] = 0.0
    _, den = order_complexity(A, OCParams(params["omega"], params["theta"], np.array([0.0, 1.0]), active))
    low = den.min()
    if low < DENOM_GUARD:
        log.info("denominator guard: shifting theta2 by %.3g", DENOM_GUARD - low)
        params["theta"][1] += DENOM_GUARD - low
    t = params["tau"]
    if t[1] - t[0] < TAU_GAP:
        c = 0.5 * (t[0] + t[1])
        t[0], t[1] = c - TAU_GAP / 2, c + TAU_GAP / 2


def train_oc(A: np.ndarray, y: np.ndarray, config: TrainConfig, active=None, heads=None, Z=None):
    """Stage 2. Returns (OCParams, loss history, heads).

    The history holds the loss before each of the ``iterations`` updates and
    after the last one; the lowest-loss iterate is returned.
    """
    active = np.ones(4, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    init = OCParams(active_terms=active)
    params = {"omega": init.omega.copy(), "theta": init.theta.copy(), "tau": np.zeros(2)}
    num, den = order_complexity(A, init)
    params["tau"] = init_thresholds(num / den, y)
    head_params = {}
    if config.finetune_heads:
        for h in HEADS:
            head_params[f"w_{h}"] = heads[h].weights.copy()
            head_params[f"b_{h}"] = np.array(heads[h].bias)
    opt = Adam({**params, **head_params}, lr=config.lr)
    params = {k: opt.params[k] for k in ("omega", "theta", "tau")}
    history = []
    best_loss, best = np.inf, None
    for _ in range(config.iterations + 1):
        if config.finetune_heads:
            cur = {h: LRHeadParams(opt.params[f"w_{h}"], float(opt.params[f"b_{h}"])) for h in HEADS}
            A = head_outputs(Z, cur)
        loss, g = ordinal_loss(params["omega"], params["theta"], params["tau"], A, y)
        history.append(loss)
        if loss < best_loss:
            best_loss, best = loss, {k: v.copy() for k, v in opt.params.items()}
        if len(history) > config.iterations:
            break
        g["omega"][~active] = 0.0
        grads = {"omega": g["omega"], "theta": g["theta"], "tau": g["tau"]}
        if config.finetune_heads:
            for k, h in enumerate(HEADS):
                dlogit = g["A"][:, k] * A[:, k] * (1 - A[:, k])
                grads[f"w_{h}"] = Z[:, GROUP_INDEX[h]].T @ dlogit
                grads[f"b_{h}"] = np.array(dlogit.sum())
        opt.step(grads)
        _project(params, A, active)
    # the quotient sharpens by shrinking its denominator, and near that pole
    # a large step can throw the iterate out of a good basin; keep the best
    if config.finetune_heads:
        heads = {h: LRHeadParams(best[f"w_{h}"].copy(), float(best[f"b_{h}"])) for h in HEADS}
    oc = OCParams(best["omega"], best["theta"], best["tau"], active)
    return oc, history, heads


# --------------------------------------------------------------------------
# public entry points
# --------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: AestheticModel
    metrics: dict
    head_losses: dict
    oc_history: list


def evaluate(model: AestheticModel, X: np.ndarray, y: np.ndarray) -> dict:
    """Accuracy, macro-F1 and the ordinal regression error on (X, y)."""
    A = model.aesthetic_batch(X)
    num, den = order_complexity(A, model.oc)
    m = num / den
    pred = classify_codes(m, model.oc)
    probs = ordinal_probabilities(m, model.oc.tau)
    expected = probs @ ORDINAL_TARGET
    mse = float(np.mean((expected - ORDINAL_TARGET[y]) ** 2))
    return {
        "n": int(len(y)),
        "accuracy": accuracy(y, pred),
        "macro_f1": macro_f1(y, pred),
        "mse": mse,
        "log_mse": float(np.log(mse)) if mse > 0 else float("-inf"),
    }


def train(dataset, config: TrainConfig | None = None, active=None) -> TrainResult:
    """Fit normalizer, heads and quotient on a 70/30 stratified split."""
    config = config or TrainConfig()
    X, y = as_arrays(dataset)
    if len(np.unique(y)) < 2:
        raise TrainingError("training needs at least two classes")
    tr, te = stratified_split(y, config.test_fraction, config.seed)
    norm = FeatureNormalizer.fit(X[tr])
    Ztr, _ = norm.transform(X[tr])
    heads, head_losses = train_heads(Ztr, y[tr], config)
    A = head_outputs(Ztr, heads)
    oc, history, heads = train_oc(A, y[tr], config, active, heads, Ztr)
    meta = {"seed": config.seed, "config": asdict(config), "config_hash": config_hash(asdict(config)),
            "n_train": int(len(tr)), "n_test": int(len(te))}
    model = AestheticModel(norm, heads, oc, meta)
    metrics = {"train": evaluate(model, X[tr], y[tr])}
    if len(te):
        metrics["test"] = evaluate(model, X[te], y[te])
    return TrainResult(model, metrics, head_losses, history)


def ablate(dataset, config: TrainConfig | None = None, drop=()) -> dict:
    """Retrain with terms in ``drop`` (subset of H, S, C, R) removed from the quotient."""
    drop = set(drop)
    if not drop <= set(HEADS):
        raise ConfigurationError(f"unknown heads in drop: {sorted(drop - set(HEADS))}")
    if {"H", "S"} <= drop or {"C", "R"} <= drop:
        raise ConfigurationError("dropping every numerator or every denominator term leaves a constant")
    active = np.array([h not in drop for h in HEADS])
    result = train(dataset, config, active)
    return {"drop": sorted(drop), **result.metrics.get("test", result.metrics["train"])}


def synthetic_dataset(n_per_class: int = 60, seed: int = 0, shift: float = 3.0, signal=("H",)) -> list:
    """Standard-normal basic features; classes negative/medium/positive are
    offset by 0, ``shift`` and ``2 * shift`` on the features of the heads in
    ``signal``."""
    rng = np.random.default_rng(seed)
    cols = np.concatenate([GROUP_INDEX[h] for h in signal]) if signal else np.array([], dtype=np.int64)
    data = []
    for code, label in enumerate(LABELS):
        X = rng.standard_normal((n_per_class, len(FEATURE_NAMES)))
        X[:, cols] += code * shift
        data.extend((BasicFeatureVector.from_array(x), label) for x in X)
    return data
