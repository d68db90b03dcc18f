"""Aesthetic heads, the order/complexity quotient and the 3-class link.

Model file layout (JSON, UTF-8, keys sorted, floats in shortest round-trip
form)::

    {
      "format": "ocmusic-aesthetic", "version": 1,
      "feature_names": [10 names],
      "normalizer": {"mean": [10], "std": [10], "active": [10 bools]},
      "heads": {"H"|"S"|"C"|"R": {"features": [names], "weights": [..], "bias": x}},
      "oc": {"omega": [4], "theta": [2], "tau": [2], "active_terms": [4 bools]},
      "metadata": {...}
    }
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateDenominatorError, ModelFormatError
from ..io_media import LABELS
from .basic import FEATURE_NAMES, BasicFeatureVector

log = logging.getLogger(__name__)

FORMAT = "ocmusic-aesthetic"
VERSION = 1
HEADS = ("H", "S", "C", "R")
GROUPS = {
    "H": ("timbre_harmony", "interval_harmony", "chord_progression_harmony", "dynamic_harmony"),
    "S": ("self_similarity_fitness",),
    "C": ("shannon_entropy", "spectral_complexity", "timbre_variability"),
    "R": ("kolmogorov_redundancy", "autocorrelation_value"),
}
GROUP_INDEX = {h: np.array([FEATURE_NAMES.index(n) for n in names]) for h, names in GROUPS.items()}
DENOM_GUARD = 1e-3


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


@dataclass
class FeatureNormalizer:
    """Training-split z-score statistics. Inactive features (no variance or
    never observed) map to z = 0."""

    mean: np.ndarray
    std: np.ndarray
    active: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "FeatureNormalizer":
        X = np.asarray(X, dtype=np.float64)
        mean = np.zeros(X.shape[1])
        std = np.ones(X.shape[1])
        active = np.zeros(X.shape[1], dtype=bool)
        for j in range(X.shape[1]):
            col = X[np.isfinite(X[:, j]), j]
            if len(col) == 0:
                log.warning("feature %s never observed; dropped", FEATURE_NAMES[j])
                continue
            mean[j] = col.mean()
            sd = col.std()
            if sd > 0:
                std[j] = sd
                active[j] = True
            else:
                log.warning("feature %s has zero variance; dropped", FEATURE_NAMES[j])
        return cls(mean, std, active)

    def transform(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(Z, imputed)``; unavailable entries are imputed at the mean."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        imputed = ~np.isfinite(X)
        Z = (np.where(imputed, self.mean, X) - self.mean) / self.std
        Z[:, ~self.active] = 0.0
        return Z, imputed


@dataclass
class LRHeadParams:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = float(self.bias)
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise ValueError("head parameters must be finite")


@dataclass
class AestheticFeatures:
    H: float
    S: float
    C: float
    R: float

    def as_array(self) -> np.ndarray:
        return np.array([self.H, self.S, self.C, self.R])


@dataclass
class OCParams:
    """omega = (w1..w4), theta = (t1, t2), tau = (tau1, tau2).

    ``active_terms`` marks which of H, S, C, R enter the quotient; removed
    terms keep their weight at zero.
    """

    omega: np.ndarray = field(default_factory=lambda: np.ones(4))
    theta: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    tau: np.ndarray = field(default_factory=lambda: np.array([0.5, 1.0]))
    active_terms: np.ndarray = field(default_factory=lambda: np.ones(4, dtype=bool))

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=np.float64).copy()
        self.theta = np.asarray(self.theta, dtype=np.float64).copy()
        self.tau = np.asarray(self.tau, dtype=np.float64).copy()
        self.active_terms = np.asarray(self.active_terms, dtype=bool).copy()
        self.omega[~self.active_terms] = 0.0
        if self.tau[0] >= self.tau[1]:
            raise ValueError("thresholds must satisfy tau1 < tau2")


def head_outputs(Z: np.ndarray, heads: dict) -> np.ndarray:
    """(n, 4) sigmoid head outputs in H, S, C, R order."""
    Z = np.atleast_2d(Z)
    return np.stack([sigmoid(Z[:, GROUP_INDEX[h]] @ heads[h].weights + heads[h].bias) for h in HEADS], axis=1)


def aesthetic_features(basic: BasicFeatureVector, heads: dict, norm: FeatureNormalizer) -> AestheticFeatures:
    Z, _ = norm.transform(basic.as_array())
    return AestheticFeatures(*head_outputs(Z, heads)[0])


def order_complexity(A: np.ndarray, params: OCParams) -> tuple[np.ndarray, np.ndarray]:
    """Numerator and denominator of the quotient for rows of (H, S, C, R)."""
    A = np.atleast_2d(A)
    w = params.omega
    num = w[0] * A[:, 0] + w[1] * A[:, 1] + params.theta[0]
    den = w[2] * A[:, 2] + w[3] * A[:, 3] + params.theta[1]
    return num, den


def measures(A: np.ndarray, params: OCParams) -> np.ndarray:
    num, den = order_complexity(A, params)
    if np.any(np.abs(den) < DENOM_GUARD):
        raise DegenerateDenominatorError(f"|denominator| below {DENOM_GUARD}")
    return num / den


def birkhoff_score(aes: AestheticFeatures, params: OCParams) -> float:
    """(w1 H + w2 S + t1) / (w3 C + w4 R + t2)."""
    return float(measures(aes.as_array(), params)[0])


def classify(measure: float, params: OCParams) -> str:
    if not np.isfinite(measure):
        raise ValueError("measure must be finite")
    if measure < params.tau[0]:
        return LABELS[0]
    if measure < params.tau[1]:
        return LABELS[1]
    return LABELS[2]


def classify_codes(m: np.ndarray, params: OCParams) -> np.ndarray:
    return (m >= params.tau[0]).astype(np.int64) + (m >= params.tau[1]).astype(np.int64)


@dataclass
class AestheticModel:
    normalizer: FeatureNormalizer
    heads: dict
    oc: OCParams
    metadata: dict = field(default_factory=dict)

    def aesthetic(self, basic: BasicFeatureVector) -> AestheticFeatures:
        return aesthetic_features(basic, self.heads, self.normalizer)

    def aesthetic_batch(self, X: np.ndarray) -> np.ndarray:
        return head_outputs(self.normalizer.transform(X)[0], self.heads)

    def score(self, basic: BasicFeatureVector) -> tuple[AestheticFeatures, float, str]:
        aes = self.aesthetic(basic)
        m = birkhoff_score(aes, self.oc)
        return aes, m, classify(m, self.oc)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "feature_names": list(FEATURE_NAMES),
            "normalizer": {
                "mean": self.normalizer.mean.tolist(),
                "std": self.normalizer.std.tolist(),
                "active": self.normalizer.active.tolist(),
            },
            "heads": {
                h: {"features": list(GROUPS[h]), "weights": self.heads[h].weights.tolist(), "bias": self.heads[h].bias}
                for h in HEADS
            },
            "oc": {
                "omega": self.oc.omega.tolist(),
                "theta": self.oc.theta.tolist(),
                "tau": self.oc.tau.tolist(),
                "active_terms": self.oc.active_terms.tolist(),
            },
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AestheticModel":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"not JSON: {exc}") from exc
        if not isinstance(d, dict) or d.get("format") != FORMAT:
            raise ModelFormatError("not an aesthetic model file")
        if d.get("version") != VERSION:
            raise ModelFormatError(f"unsupported model version {d.get('version')!r}")
        try:
            if list(d["feature_names"]) != list(FEATURE_NAMES):
                raise ModelFormatError("feature layout differs from this build")
            n = d["normalizer"]
            norm = FeatureNormalizer(np.array(n["mean"], float), np.array(n["std"], float), np.array(n["active"], bool))
            heads = {}
            for h in HEADS:
                rec = d["heads"][h]
                if list(rec["features"]) != list(GROUPS[h]) or len(rec["weights"]) != len(GROUPS[h]):
                    raise ModelFormatError(f"head {h} has an unexpected feature group")
                heads[h] = LRHeadParams(rec["weights"], rec["bias"])
            o = d["oc"]
            oc = OCParams(o["omega"], o["theta"], o["tau"], o["active_terms"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ModelFormatError):
                raise
            raise ModelFormatError(f"malformed model file: {exc}") from exc
        return cls(norm, heads, oc, d.get("metadata", {}))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "AestheticModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(f.read())


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]
