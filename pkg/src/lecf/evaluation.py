"""Top-K ranking metrics and the Lorentz-transformation / sparsity probes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import UsageError
from .manifold import LorentzMap, make_boost, planar_rotation


def recall_at_k(ranked, relevant, k: int) -> float:
    relevant = set(relevant)
    if not relevant:
        return float("nan")
    hits = sum(1 for item in list(ranked)[:k] if item in relevant)
    return hits / len(relevant)


def ndcg_at_k(ranked, relevant, k: int) -> float:
    relevant = set(relevant)
    if not relevant:
        return float("nan")
    dcg = 0.0
    for r, item in enumerate(list(ranked)[:k], start=1):
        if item in relevant:
            dcg += 1.0 / math.log2(r + 1)
    idcg = sum(1.0 / math.log2(r + 1) for r in range(1, min(len(relevant), k) + 1))
    return dcg / idcg


def rank_items(scores: np.ndarray, exclude: list[np.ndarray], k: int) -> np.ndarray:
    """Top-k item ids per user: descending score, ties by ascending id.

    Items in ``exclude[u]`` (the user's training items) never appear.
    """
    s = np.array(scores, dtype=np.float64, copy=True)
    for u, items in enumerate(exclude):
        s[u, items] = -np.inf
    # stable sort on -score keeps ascending item id within ties
    order = np.argsort(-s, axis=1, kind="stable")[:, :k]
    n_valid = (s > -np.inf).sum(1)
    return [order[u, : min(k, n_valid[u])] for u in range(s.shape[0])]


def evaluate_scores(scores, exclude, relevant, ks=(10, 20)) -> dict:
    """Mean Recall@K / NDCG@K over users with a non-empty relevant set."""
    scores = scores.detach().numpy() if isinstance(scores, torch.Tensor) else np.asarray(scores)
    users = [u for u, r in enumerate(relevant) if len(r)]
    out = {}
    kmax = max(ks)
    ranked = rank_items(scores, exclude, kmax)
    for k in ks:
        out[f"recall@{k}"] = float(np.mean([recall_at_k(ranked[u], relevant[u], k) for u in users])) if users else 0.0
        out[f"ndcg@{k}"] = float(np.mean([ndcg_at_k(ranked[u], relevant[u], k) for u in users])) if users else 0.0
    out["n_users"] = len(users)
    return out


def random_baseline(exclude, relevant, n_items: int, k: int, seed: int = 0, repeats: int = 20) -> float:
    """Empirical Recall@k of a uniformly random scorer."""
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(repeats):
        scores = rng.random((len(relevant), n_items))
        vals.append(evaluate_scores(scores, exclude, relevant, (k,))[f"recall@{k}"])
    return float(np.mean(vals))


@dataclass
class ProbeConfig:
    alpha: float = 0.0
    beta: float = 0.0
    p_e: float = 0.0
    mode: str = "joint"

    def __post_init__(self):
        if not 0.0 <= self.p_e < 1.0:
            raise UsageError("p_e must satisfy 0 <= p_e < 1")
        if self.mode not in ("joint", "test_only"):
            raise UsageError("mode must be 'joint' or 'test_only'")

    def transform(self, n: int) -> LorentzMap:
        """rotation(beta on space dims 1,2) ∘ boost(alpha on space dim 1)."""
        boost = make_boost(self.alpha, 1, n)
        if n < 2:
            return boost
        return planar_rotation(self.beta, n, (1, 2)) @ boost


def records(metrics: dict, split: str, seed: int, probe: dict | None = None) -> list[dict]:
    """Flatten ``{'recall@10': v, ...}`` into JSON metric records."""
    out = []
    for key, value in metrics.items():
        if "@" not in key:
            continue
        name, k = key.split("@")
        out.append(dict(metric=name, K=int(k), value=value, split=split, probe=probe or {}, seed=seed))
    return out
