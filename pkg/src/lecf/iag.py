"""Item Attribute Generator: centroid message passing over the knowledge graph."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .errors import DegenerateInputError, UsageError
from .manifold import as_tensor, lorentz_norm, normalize_timelike


@dataclass
class IagConfig:
    L1: int = 2
    omega1: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.L1 < 1:
            raise UsageError("L1 must be >= 1")
        if not self.omega1:
            self.omega1 = [1.0] * self.L1
        if len(self.omega1) != self.L1 or any(w <= 0 for w in self.omega1):
            raise UsageError("omega1 needs L1 strictly positive entries")


def centroid_aggregate(weights, points, C: float = 1.0) -> torch.Tensor:
    """Weighted hyperbolic centroid of ``points`` (shape (k, n+1)).

    Closed form: sqrt(C) * sum(w_j p_j) / |‖sum(w_j p_j)‖_L|. Scaling every
    weight by the same positive factor leaves the result unchanged.
    """
    w = as_tensor(weights)
    p = as_tensor(points)
    if bool((w < 0).any()) or not bool((w > 0).any()):
        raise DegenerateInputError("centroid needs nonnegative weights with at least one > 0")
    return normalize_timelike((w.unsqueeze(-1) * p).sum(-2), C)


def segment_centroid(index, weights, points, fallback, C: float = 1.0) -> torch.Tensor:
    """Centroid per segment: row k of the result aggregates ``points[index == k]``.

    Segments with no positive weight (isolated or fully pruned nodes) return
    the matching row of ``fallback``.
    """
    n_out = fallback.shape[0]
    acc = torch.zeros_like(fallback).index_add(0, index, weights.unsqueeze(-1) * points)
    has = torch.zeros(n_out, dtype=torch.bool).index_fill(0, index[weights > 0], True)
    # swap in the fallback before normalizing so empty rows never produce nan
    acc = torch.where(has.unsqueeze(-1), acc, fallback)
    scale = math.sqrt(C) / lorentz_norm(acc)
    return torch.where(has.unsqueeze(-1), acc * scale.unsqueeze(-1), fallback)


def combine_layers(per_layer, omega, C: float = 1.0) -> torch.Tensor:
    """Merge per-layer embeddings (list of (..., n+1) tensors) with weights omega."""
    if len(per_layer) < 1:
        raise UsageError("need at least one layer")
    if len(omega) != len(per_layer):
        raise UsageError("one weight per layer")
    if all(w == 0 for w in omega):
        raise DegenerateInputError("all layer weights are zero")
    acc = sum(w * as_tensor(x) for w, x in zip(omega, per_layer))
    return normalize_timelike(acc, C)


def iag_forward(src, dst, coef, entity_embeds, config: IagConfig, C: float = 1.0) -> list[torch.Tensor]:
    """Stack L1 centroid layers over KG edges head=src -> neighbor=dst.

    ``coef`` holds the sparse attention weights per edge (zero for pruned
    edges). Returns [e^1, ..., e^L1].
    """
    e = entity_embeds
    out = []
    for _ in range(config.L1):
        e = segment_centroid(src, coef, e[dst], e, C)
        out.append(e)
    return out
