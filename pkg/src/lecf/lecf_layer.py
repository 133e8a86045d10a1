"""LECF layer: joint update of attribute and hyperbolic embeddings.

Edges are passed as parallel index tensors (``center``, ``nbr``). Messages flow
from ``nbr`` into ``center``; the same code serves the user side (center=user)
and the item side (center=item).
"""

from __future__ import annotations

import logging

import torch
from torch import nn

from .errors import DomainError, UsageError
from .iag import segment_centroid
from .manifold import DTYPE, LorentzMap, lorentz_distance, lorentz_norm, normalize_timelike

log = logging.getLogger(__name__)

VX_EPS = 1e-12
VX_NUDGE = 1e-8

ABLATIONS = ("none", "no_sparse_attention", "no_s1", "no_s2", "break_equivariance")


def mlp(d_in: int, d_hidden: int, d_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(d_in, d_hidden, dtype=DTYPE),
        nn.SiLU(),
        nn.Linear(d_hidden, d_out, dtype=DTYPE),
    )


class LorentzMapHead(nn.Module):
    """Affine map from a message vector to W_m plus the time-axis vector v."""

    def __init__(self, n: int, n_m: int):
        super().__init__()
        self.n = n
        self.wmap = nn.Linear(n_m, n * (n + 1), dtype=DTYPE)
        v = torch.zeros(n + 1, dtype=DTYPE)
        v[0] = 1.0
        self.v = nn.Parameter(v)

    def matrices(self, m: torch.Tensor) -> torch.Tensor:
        return self.wmap(m).reshape(*m.shape[:-1], self.n, self.n + 1)


class LecfLayer(nn.Module):
    def __init__(self, n: int, n_m: int | None = None, ablation: str = "none", residual: bool = False):
        super().__init__()
        if ablation not in ABLATIONS:
            raise UsageError(f"unknown ablation {ablation!r}")
        n_m = n if n_m is None else n_m
        self.n, self.n_m = n, n_m
        self.ablation = ablation
        self.residual = residual
        if ablation == "no_s1":
            d_in = 2 * n
        elif ablation == "break_equivariance":
            d_in = 2 * n + 2 * (n + 1)
        else:
            d_in = 2 * n + 1
        self.phi_e = mlp(d_in, n, n_m)
        self.phi_h = mlp(n + n_m, n, n)
        self.head = LorentzMapHead(n, n_m)
        # attention weight w, negative so closer neighbors weigh more
        self.w = nn.Parameter(torch.tensor(-1.0, dtype=DTYPE))

    @property
    def break_equivariance(self) -> bool:
        return self.ablation == "break_equivariance"


def edge_message(layer: LecfLayer, h_u, h_i, d) -> torch.Tensor:
    """m_ui = phi_e(h_u, h_i, d); hyperbolic state enters only through d."""
    if layer.ablation == "no_s1":
        z = torch.cat([h_u, h_i], dim=-1)
    else:
        z = torch.cat([h_u, h_i, d.unsqueeze(-1)], dim=-1)
    return layer.phi_e(z)


def non_equivariant_edge_message(layer: LecfLayer, h_u, h_i, x_u, x_i) -> torch.Tensor:
    """Variant that feeds raw hyperboloid coordinates to phi_e (LECF‡)."""
    if not layer.break_equivariance:
        raise UsageError("non-equivariant messages need ablation='break_equivariance'")
    return layer.phi_e(torch.cat([h_u, h_i, x_u, x_i], dim=-1))


def _safe_vx(v: torch.Tensor, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Return (v per point, v^T x), nudging v's time entry where v^T x vanishes."""
    v = v.expand_as(x)
    vx = (v * x).sum(-1)
    bad = vx.abs() < VX_EPS
    if bool(bad.any()):
        log.warning("v^T x below %g on %d point(s); perturbing v", VX_EPS, int(bad.sum()))
        nudge = torch.zeros_like(x)
        nudge[..., 0] = VX_NUDGE
        v = torch.where(bad.unsqueeze(-1), v + nudge, v)
        vx = (v * x).sum(-1)
    return v, vx


def build_lorentz_map(W, v, x, C: float = 1.0) -> LorentzMap:
    """Stack the learned map [[sqrt(‖Wx‖²+C)/(vᵀx) · vᵀ], [W]].

    W has shape (..., n, n+1), x (..., n+1). The product with x always lands
    on the hyperboloid, whatever W and v are.
    """
    v, vx = _safe_vx(v, x)
    Wx = torch.einsum("...ij,...j->...i", W, x)
    scale = torch.sqrt((Wx * Wx).sum(-1) + C) / vx
    top = (scale.unsqueeze(-1) * v).unsqueeze(-2)
    return LorentzMap(torch.cat([top, W], dim=-2), "learned")


def transform_points(W, v, x, C: float = 1.0) -> torch.Tensor:
    """f_x(m) · x without materializing the full (n+1)x(n+1) matrix."""
    v, vx = _safe_vx(v, x)
    Wx = torch.einsum("...ij,...j->...i", W, x)
    scale = torch.sqrt((Wx * Wx).sum(-1) + C) / vx
    return torch.cat([(scale * vx).unsqueeze(-1), Wx], dim=-1)


def apply_equivariant_transform(fx, C: float = 1.0) -> torch.Tensor:
    """pi(f, x): renormalize f·x onto the hyperboloid."""
    if bool((lorentz_norm(fx) == 0).any()):
        raise DomainError("f·x has zero Lorentz norm")
    return normalize_timelike(fx, C)


def aggregate_messages(center, messages, n_nodes: int) -> torch.Tensor:
    """m_u = sum of incoming messages per center node (zero when none)."""
    out = torch.zeros(n_nodes, messages.shape[-1], dtype=messages.dtype)
    return out.index_add(0, center, messages)


def update_attribute(layer: LecfLayer, h, m) -> torch.Tensor:
    out = layer.phi_h(torch.cat([h, m], dim=-1))
    return h + out if layer.residual else out


def update_hyperbolic(layer: LecfLayer, center, nbr, coef, messages, x_center, x_nbr, C: float = 1.0):
    """Centroid of transformed neighbor points, weighted by sparse attention."""
    if layer.ablation == "no_s2":
        pts = x_nbr[nbr]
    else:
        W = layer.head.matrices(messages)
        pts = apply_equivariant_transform(transform_points(W, layer.head.v, x_nbr[nbr], C), C)
    return segment_centroid(center, coef, pts, x_center, C)


def half_step(layer: LecfLayer, center, nbr, coef, x_c, x_n, h_c, h_n, C: float = 1.0):
    """Update one side of the bipartite graph from its neighbors.

    Only edges with positive coefficient (retained by sparse attention)
    contribute messages.
    """
    keep = coef > 0
    center, nbr, coef = center[keep], nbr[keep], coef[keep]
    if layer.break_equivariance:
        msg = non_equivariant_edge_message(layer, h_c[center], h_n[nbr], x_c[center], x_n[nbr])
    else:
        d = lorentz_distance(x_c[center], x_n[nbr], C, check=False)
        msg = edge_message(layer, h_c[center], h_n[nbr], d)
    x_new = update_hyperbolic(layer, center, nbr, coef, msg, x_c, x_n, C)
    h_new = update_attribute(layer, h_c, aggregate_messages(center, msg, h_c.shape[0]))
    return x_new, h_new


def layer_forward(layer: LecfLayer, users, items, coef_ui, coef_iu, x_u, x_i, h_u, h_i, C: float = 1.0):
    """One LECF layer over the bipartite edge list (users[e], items[e]).

    ``coef_ui`` weights item->user messages (user is the query), ``coef_iu``
    the reverse direction. Returns (x_u', x_i', h_u', h_i').
    """
    xu2, hu2 = half_step(layer, users, items, coef_ui, x_u, x_i, h_u, h_i, C)
    xi2, hi2 = half_step(layer, items, users, coef_iu, x_i, x_u, h_i, h_u, C)
    return xu2, xi2, hu2, hi2
