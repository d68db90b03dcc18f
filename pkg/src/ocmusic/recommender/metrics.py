"""Leave-one-out ranking metrics."""
from __future__ import annotations

import numpy as np

from ..errors import EmptyInputError

REPORT_KEYS = ("HR@1", "HR@5", "HR@10", "NDCG@5", "NDCG@10")


def rank_of_target(scores: np.ndarray, target: int, candidates: np.ndarray | None = None) -> int:
    """1-based rank of ``target`` among ``candidates`` (all ids by default).

    Higher scores rank first; equal scores rank the smaller id first.
    """
    scores = np.asarray(scores)
    if candidates is None:
        candidates = np.arange(len(scores))
    s = scores[candidates]
    t = scores[target]
    better = np.sum(s > t) + np.sum((s == t) & (candidates < target))
    return int(better) + 1


def hr_ndcg(ranks, ks=(1, 5, 10)) -> dict:
    """HR@k and NDCG@k (single relevant item, gain 1/log2(rank + 1))."""
    ranks = np.asarray(ranks, dtype=np.float64)
    if len(ranks) == 0:
        raise EmptyInputError("no test sessions")
    out = {}
    for k in ks:
        hit = ranks <= k
        out[f"HR@{k}"] = float(hit.mean())
        out[f"NDCG@{k}"] = float(np.where(hit, 1.0 / np.log2(ranks + 1.0), 0.0).mean())
    return out


def format_report(metrics: dict, keys=REPORT_KEYS) -> str:
    """``key=value`` lines in a fixed order."""
    return "".join(f"{k}={metrics[k]:.6f}\n" for k in keys if k in metrics)
