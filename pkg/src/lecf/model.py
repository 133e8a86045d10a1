"""The full model: parameters, two-stage forward pass, scoring and loss."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from . import hsam
from .errors import UsageError
from .iag import IagConfig, combine_layers, iag_forward
from .lecf_layer import ABLATIONS, LecfLayer, LorentzMapHead, layer_forward
from .manifold import DTYPE, lorentz_distance, project_to_hyperboloid

log = logging.getLogger(__name__)

MANIFOLD_PARAMS = ("entity", "user_x", "item_x")


@dataclass
class TrainConfig:
    dim: int = 64
    L1: int = 2
    L2: int = 3
    lr: float = 1e-3
    euclid_lr_scale: float = 1.0  # Euclidean weights step with lr * this
    margin: float = 0.1
    lam: float = 1e-5
    weight_decay: float = 1e-4
    epochs: int = 500
    patience: int = 10
    seed: int = 0
    ablation: str = "none"
    t: int = 16
    gamma_mode: str = "unit"
    C: float = 1.0
    omega1: list[float] = field(default_factory=list)
    omega2: list[float] = field(default_factory=list)
    residual: bool = False
    init_std: float = 0.01
    valid_k: int = 20

    def __post_init__(self):
        if self.margin <= 0:
            raise UsageError("margin must be > 0")
        if self.lr <= 0 or self.euclid_lr_scale <= 0:
            raise UsageError("learning rates must be > 0")
        if self.lam < 0 or self.weight_decay < 0:
            raise UsageError("lambda and weight decay must be >= 0")
        if self.ablation not in ABLATIONS:
            raise UsageError(f"ablation must be one of {ABLATIONS}")
        if self.gamma_mode not in hsam.GAMMA_MODES:
            raise UsageError(f"gamma_mode must be one of {hsam.GAMMA_MODES}")
        if self.L1 < 1 or self.L2 < 1 or self.dim < 1 or self.t < 1 or self.C <= 0:
            raise UsageError("dim, L1, L2, t must be >= 1 and C > 0")
        if self.epochs < 0 or self.patience < 1:
            raise UsageError("epochs must be >= 0 and patience >= 1")
        if not self.omega1:
            self.omega1 = [1.0] * self.L1
        if not self.omega2:
            self.omega2 = [1.0] * self.L2
        if len(self.omega1) != self.L1 or len(self.omega2) != self.L2:
            raise UsageError("omega1/omega2 need one weight per layer")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainGraph:
    """Tensor view of the training graphs.

    ``ui_users[e], ui_items[e]`` are training interactions; KG edges include
    inverse triples. ``item_entity[i]`` is the matched entity or -1.
    """

    n_users: int
    n_items: int
    n_entities: int
    n_relations: int
    ui_users: torch.Tensor
    ui_items: torch.Tensor
    kg_src: torch.Tensor
    kg_rel: torch.Tensor
    kg_dst: torch.Tensor
    item_entity: torch.Tensor

    @classmethod
    def from_bundle(cls, bundle, split: int = 0) -> "TrainGraph":
        sel = bundle.split == split
        tr = bundle.triples
        unmatched = int((bundle.item_entity < 0).sum())
        if unmatched:
            log.info("%d item(s) have no KG entity; their attribute vectors start at zero", unmatched)
        return cls(
            n_users=bundle.n_users,
            n_items=bundle.n_items,
            n_entities=bundle.n_entities,
            n_relations=bundle.n_relations,
            ui_users=torch.as_tensor(bundle.interactions[sel, 0], dtype=torch.long),
            ui_items=torch.as_tensor(bundle.interactions[sel, 1], dtype=torch.long),
            kg_src=torch.as_tensor(tr[:, 0], dtype=torch.long),
            kg_rel=torch.as_tensor(tr[:, 1], dtype=torch.long),
            kg_dst=torch.as_tensor(tr[:, 2], dtype=torch.long),
            item_entity=torch.as_tensor(bundle.item_entity, dtype=torch.long),
        )


@dataclass
class AttentionMasks:
    """Retained-edge masks, rebuilt once per epoch."""

    kg: torch.Tensor
    ui: list[torch.Tensor]
    iu: list[torch.Tensor]


@dataclass
class ForwardOutput:
    x_u: torch.Tensor
    x_i: torch.Tensor
    entity: torch.Tensor
    h_i0: torch.Tensor
    x_u_layers: list[torch.Tensor]
    x_i_layers: list[torch.Tensor]
    e_layers: list[torch.Tensor]


def _xavier(shape, gen: torch.Generator) -> torch.Tensor:
    t = torch.empty(shape, dtype=DTYPE)
    nn.init.xavier_uniform_(t, generator=gen)
    return t


def _hyperbolic_table(n_rows: int, n: int, std: float, C: float, gen: torch.Generator) -> torch.Tensor:
    spatial = torch.randn(n_rows, n, dtype=DTYPE, generator=gen) * std
    return project_to_hyperboloid(spatial, C)


class LecfModel(nn.Module):
    def __init__(self, config: TrainConfig, n_users: int, n_items: int, n_entities: int, n_relations: int):
        super().__init__()
        self.config = config
        n = config.dim
        self.n_users, self.n_items = n_users, n_items
        self.layers = nn.ModuleList(
            LecfLayer(n, n, ablation=config.ablation, residual=config.residual) for _ in range(config.L2)
        )
        self.kg_head = LorentzMapHead(n, n)
        self.iag = IagConfig(config.L1, list(config.omega1))
        self.entity = nn.Parameter(torch.empty(n_entities, n + 1, dtype=DTYPE))
        self.user_x = nn.Parameter(torch.empty(n_users, n + 1, dtype=DTYPE))
        self.item_x = nn.Parameter(torch.empty(n_items, n + 1, dtype=DTYPE))
        self.relation = nn.Parameter(torch.empty(n_relations, n, dtype=DTYPE))
        self.attr_user = nn.Parameter(torch.ones(n_users, n, dtype=DTYPE))
        self.reset_parameters(config.seed)

    @classmethod
    def for_graph(cls, config: TrainConfig, graph: TrainGraph) -> "LecfModel":
        return cls(config, graph.n_users, graph.n_items, graph.n_entities, graph.n_relations)

    @torch.no_grad()
    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        cfg = self.config
        n = cfg.dim
        for name, p in self.named_parameters():
            if name in MANIFOLD_PARAMS:
                p.copy_(_hyperbolic_table(p.shape[0], n, cfg.init_std, cfg.C, gen))
            elif name == "attr_user":
                p.fill_(1.0)
            elif name.endswith(".v"):
                p.zero_()
                p[0] = 1.0
            elif name.endswith(".w"):
                p.fill_(-1.0)
            elif name.endswith("wmap.bias"):
                # W_m starts at [0 | I]: the learned map begins as the identity on x
                p.copy_(torch.cat([torch.zeros(n, 1, dtype=DTYPE), torch.eye(n, dtype=DTYPE)], 1).reshape(-1))
            elif name.endswith("bias"):
                p.zero_()
            elif p.ndim == 2 and p.numel() > 0:
                p.copy_(_xavier(p.shape, gen))

    def manifold_parameters(self):
        return [getattr(self, n) for n in MANIFOLD_PARAMS]

    def euclidean_parameters(self):
        return [p for n, p in self.named_parameters() if n not in MANIFOLD_PARAMS]

    # -- attention ---------------------------------------------------------

    def kg_coefficients(self, g: TrainGraph) -> torch.Tensor:
        return hsam.kg_edge_attention(
            g.kg_src, g.kg_rel, g.kg_dst, self.entity, self.relation, self.kg_head,
            self.config.gamma_mode, self.config.C,
        )

    def ui_coefficients(self, g: TrainGraph, layer: LecfLayer) -> tuple[torch.Tensor, torch.Tensor]:
        cfg = self.config
        a_ui = hsam.edge_attention(g.ui_users, g.ui_items, self.user_x, self.item_x, layer.w, cfg.gamma_mode, cfg.C)
        a_iu = hsam.edge_attention(g.ui_items, g.ui_users, self.item_x, self.user_x, layer.w, cfg.gamma_mode, cfg.C)
        return a_ui, a_iu

    @torch.no_grad()
    def build_attention(self, g: TrainGraph, epoch: int = 0) -> AttentionMasks:
        """Pick the retained neighbors for every query node from current embeddings."""
        cfg = self.config
        t = cfg.t
        u, i = g.ui_users.numpy(), g.ui_items.numpy()
        if cfg.ablation == "no_sparse_attention":
            rng = np.random.default_rng([cfg.seed, epoch])
            kg = hsam.random_select(g.kg_src.numpy(), t, rng)
            ui = [hsam.random_select(u, t, rng) for _ in self.layers]
            iu = [hsam.random_select(i, t, rng) for _ in self.layers]
        else:
            a_kg = self.kg_coefficients(g)
            kg = hsam.select_edges(g.kg_src.numpy(), g.kg_dst.numpy(), a_kg, g.n_entities, t)
            ui, iu = [], []
            for layer in self.layers:
                a_ui, a_iu = self.ui_coefficients(g, layer)
                ui.append(hsam.select_edges(u, i, a_ui, g.n_items, t))
                iu.append(hsam.select_edges(i, u, a_iu, g.n_users, t))
        as_t = lambda m: torch.as_tensor(m, dtype=torch.bool)
        return AttentionMasks(as_t(kg), [as_t(m) for m in ui], [as_t(m) for m in iu])

    def _sparse(self, coef: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if self.config.ablation == "no_sparse_attention":
            return mask.to(DTYPE)
        return torch.where(mask, coef, torch.zeros_like(coef))

    # -- forward -----------------------------------------------------------

    def forward(self, g: TrainGraph, masks: AttentionMasks) -> ForwardOutput:
        cfg = self.config
        C = cfg.C
        if cfg.ablation == "no_sparse_attention":
            a_kg = masks.kg.to(DTYPE)
        else:
            a_kg = self._sparse(self.kg_coefficients(g), masks.kg)
        e_layers = iag_forward(g.kg_src, g.kg_dst, a_kg, self.entity, self.iag, C)
        entity = combine_layers(e_layers, cfg.omega1, C)

        matched = g.item_entity >= 0
        h_i = torch.zeros(g.n_items, cfg.dim, dtype=DTYPE)
        if g.n_entities:
            h_i = torch.where(matched.unsqueeze(-1), entity[g.item_entity.clamp(min=0), 1:], h_i)
        h_i0 = h_i

        x_u, x_i, h_u = self.user_x, self.item_x, self.attr_user
        xu_layers, xi_layers = [], []
        for l, layer in enumerate(self.layers):
            if cfg.ablation == "no_sparse_attention":
                c_ui, c_iu = masks.ui[l].to(DTYPE), masks.iu[l].to(DTYPE)
            else:
                a_ui, a_iu = self.ui_coefficients(g, layer)
                c_ui, c_iu = self._sparse(a_ui, masks.ui[l]), self._sparse(a_iu, masks.iu[l])
            x_u, x_i, h_u, h_i = layer_forward(layer, g.ui_users, g.ui_items, c_ui, c_iu, x_u, x_i, h_u, h_i, C)
            xu_layers.append(x_u)
            xi_layers.append(x_i)
        return ForwardOutput(
            x_u=combine_layers(xu_layers, cfg.omega2, C),
            x_i=combine_layers(xi_layers, cfg.omega2, C),
            entity=entity,
            h_i0=h_i0,
            x_u_layers=xu_layers,
            x_i_layers=xi_layers,
            e_layers=e_layers,
        )

    def regularizer(self) -> torch.Tensor:
        total = torch.zeros((), dtype=DTYPE)
        for name, p in self.named_parameters():
            q = p[:, 1:] if name in MANIFOLD_PARAMS else p
            total = total + (q * q).sum()
        return total


def predict_score(x_u, x_i, C: float = 1.0) -> torch.Tensor:
    """exp(-d_L(x_u, x_i)), in (0, 1]."""
    return torch.exp(-lorentz_distance(x_u, x_i, C, check=False))


def score_matrix(x_u: torch.Tensor, x_i: torch.Tensor, C: float = 1.0) -> torch.Tensor:
    """All user-item scores as a (n_users, n_items) tensor."""
    return predict_score(x_u.unsqueeze(1), x_i.unsqueeze(0), C)


def margin_loss(pos, neg, margin: float, lam: float = 0.0, model: LecfModel | None = None) -> torch.Tensor:
    loss = torch.clamp(neg - pos + margin, min=0.0).sum()
    if lam and model is not None:
        loss = loss + lam * model.regularizer()
    return loss


def user_positives(users: np.ndarray, items: np.ndarray, n_users: int) -> list[np.ndarray]:
    order = np.lexsort((items, users))
    users, items = users[order], items[order]
    bounds = np.searchsorted(users, np.arange(n_users + 1))
    return [items[bounds[u]:bounds[u + 1]] for u in range(n_users)]


def sample_pairs(positives: list[np.ndarray], n_items: int, seed: int, epoch: int) -> np.ndarray:
    """One (u, i+, i-) triple per user with at least one positive.

    Negatives are drawn uniformly from non-positives by rejection.
    """
    rng = np.random.default_rng([seed, epoch, 7])
    out = []
    for u, pos in enumerate(positives):
        if len(pos) == 0 or len(pos) >= n_items:
            continue
        ip = pos[rng.integers(len(pos))]
        pos_set = set(pos.tolist())
        while True:
            ineg = int(rng.integers(n_items))
            if ineg not in pos_set:
                break
        out.append((u, int(ip), ineg))
    return np.asarray(out, dtype=np.int64).reshape(-1, 3)
