"""Hyperbolic sparse attention.

Attention is computed over a directed edge list: ``src`` is the query node,
``dst`` the candidate neighbor. Coefficients are normalized per query;
importance entropies are computed per candidate from the coefficients of the
edges pointing at it; each query keeps its ``t`` lowest-entropy candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import DataError, UsageError
from .lecf_layer import LorentzMapHead, transform_points
from .manifold import DTYPE, as_tensor, lorentz_distance

GAMMA_MODES = ("unit", "time")


@dataclass
class AttentionParams:
    w: float = -1.0
    gamma_mode: str = "unit"
    t: int = 16

    def __post_init__(self):
        if self.t < 1:
            raise UsageError("t must be >= 1")
        if self.gamma_mode not in GAMMA_MODES:
            raise UsageError(f"gamma_mode must be one of {GAMMA_MODES}")


def lorentz_factor(x: torch.Tensor, gamma_mode: str, C: float = 1.0) -> torch.Tensor:
    if gamma_mode == "unit":
        return torch.ones(x.shape[:-1], dtype=DTYPE)
    if gamma_mode == "time":
        return x[..., 0] / math.sqrt(C)
    raise UsageError(f"gamma_mode must be one of {GAMMA_MODES}")


def segment_max(index: torch.Tensor, values: torch.Tensor, n: int) -> torch.Tensor:
    out = torch.full((n,), -math.inf, dtype=values.dtype)
    return out.scatter_reduce(0, index, values, reduce="amax", include_self=True)


def normalize_scores(src, logits, gamma_src, gamma_dst, n_src: int) -> torch.Tensor:
    """a = exp(logit)·γ(query) / Σ_j' exp(logit_j')·γ(n_j'), per query row.

    The per-row max is subtracted from the logits first; it cancels between
    numerator and denominator.
    """
    shift = segment_max(src, logits.detach(), n_src)[src]
    abar = torch.exp(logits - shift)
    denom = torch.zeros(n_src, dtype=DTYPE).index_add(0, src, abar * gamma_dst)
    return abar * gamma_src / denom[src]


def edge_attention(src, dst, x_src, x_dst, w, gamma_mode: str = "unit", C: float = 1.0) -> torch.Tensor:
    """Distance-based attention a(i, j) for every edge (src[e], dst[e]).

    ``w`` may be a float or a scalar tensor (learnable weight).
    """
    src, dst = torch.as_tensor(src), torch.as_tensor(dst)
    d = lorentz_distance(x_src[src], x_dst[dst], C, check=False)
    g_src = lorentz_factor(x_src[src], gamma_mode, C)
    g_dst = lorentz_factor(x_dst[dst], gamma_mode, C)
    return normalize_scores(src, w * d, g_src, g_dst, x_src.shape[0])


def node_attention(x_i, x_nbrs, w: float = -1.0, gamma_mode: str = "unit", C: float = 1.0) -> torch.Tensor:
    """Dense attention row for one query node over its neighbors."""
    x_nbrs = as_tensor(x_nbrs)
    if x_nbrs.shape[0] == 0:
        return torch.zeros(0, dtype=DTYPE)
    k = x_nbrs.shape[0]
    src = torch.zeros(k, dtype=torch.long)
    dst = torch.arange(k)
    return edge_attention(src, dst, as_tensor(x_i).unsqueeze(0), x_nbrs, w, gamma_mode, C)


def kg_edge_attention(src, rel, dst, entity_embeds, relation_embeds, head: LorentzMapHead,
                      gamma_mode: str = "unit", C: float = 1.0) -> torch.Tensor:
    """a(i, r, j) from d_L(f_r(e_i), e_j), with f_r the learned Lorentz map of r."""
    src, rel, dst = (torch.as_tensor(a) for a in (src, rel, dst))
    if rel.numel() and (int(rel.min()) < 0 or int(rel.max()) >= relation_embeds.shape[0]):
        raise DataError("relation id out of range")
    W = head.matrices(relation_embeds)[rel]
    heads = entity_embeds[src]
    moved = transform_points(W, head.v, heads, C)
    d = lorentz_distance(moved, entity_embeds[dst], C, check=False)
    g_src = lorentz_factor(heads, gamma_mode, C)
    g_dst = lorentz_factor(entity_embeds[dst], gamma_mode, C)
    return normalize_scores(src, d, g_src, g_dst, entity_embeds.shape[0])


def neighbor_entropy(dst, coef, n_dst: int) -> torch.Tensor:
    """m(j) = entropy of softmax_{i' -> j}(a(i', j)) over edges pointing at j.

    Nodes with no incoming edge get +inf.
    """
    dst = torch.as_tensor(dst)
    coef = as_tensor(coef).detach()
    shift = segment_max(dst, coef, n_dst)[dst]
    ex = torch.exp(coef - shift)
    z = torch.zeros(n_dst, dtype=DTYPE).index_add(0, dst, ex)
    p = ex / z[dst]
    plogp = torch.where(p > 0, p * torch.log(p), torch.zeros_like(p))
    m = -torch.zeros(n_dst, dtype=DTYPE).index_add(0, dst, plogp)
    deg = torch.bincount(dst, minlength=n_dst)
    return torch.where(deg > 0, m.clamp(min=0.0), torch.full_like(m, math.inf))


def sparse_select(src, dst, m_values, t: int) -> np.ndarray:
    """Boolean mask over edges: for each query, its t candidates of smallest m.

    Ties on m are broken by ascending candidate id.
    """
    if t < 1:
        raise UsageError("t must be >= 1")
    src = np.asarray(src)
    dst = np.asarray(dst)
    m = np.asarray(m_values, dtype=np.float64)[dst]
    order = np.lexsort((dst, m, src))
    s_sorted = src[order]
    starts = np.r_[0, np.flatnonzero(np.diff(s_sorted)) + 1]
    counts = np.diff(np.r_[starts, len(order)])
    rank = np.arange(len(order)) - np.repeat(starts, counts)
    keep = np.zeros(len(src), dtype=bool)
    keep[order[rank < t]] = True
    return keep


def random_select(src, t: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly pick up to t edges per query (the no-sparse-attention ablation)."""
    src = np.asarray(src)
    return sparse_select(src, np.arange(len(src)), rng.random(len(src)), t)


def select_edges(src, dst, coef, n_dst: int, t: int) -> np.ndarray:
    m = neighbor_entropy(dst, coef, n_dst)
    return sparse_select(src, dst, m.numpy(), t)
