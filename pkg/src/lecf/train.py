"""Training loop, checkpoints, and the robustness probes that need a model."""

from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .dataio import TEST, TRAIN, VALID, GraphBundle
from .errors import DataError
from .evaluation import ProbeConfig, evaluate_scores
from .model import (
    LecfModel, TrainConfig, TrainGraph, margin_loss, predict_score, sample_pairs, score_matrix, user_positives,
)
from .optim import RiemannianSGD, param_groups

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "lecf-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class TrainResult:
    model: LecfModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1


def train_step(model: LecfModel, graph: TrainGraph, positives, epoch: int, opt) -> float:
    cfg = model.config
    masks = model.build_attention(graph, epoch)
    trip = torch.as_tensor(sample_pairs(positives, graph.n_items, cfg.seed, epoch))
    out = model(graph, masks)
    pos = predict_score(out.x_u[trip[:, 0]], out.x_i[trip[:, 1]], cfg.C)
    neg = predict_score(out.x_u[trip[:, 0]], out.x_i[trip[:, 2]], cfg.C)
    loss = margin_loss(pos, neg, cfg.margin, cfg.lam, model)
    opt.zero_grad()
    loss.backward()
    opt.step()
    return float(loss.detach())


@torch.no_grad()
def final_embeddings(model: LecfModel, graph: TrainGraph, epoch: int = 0):
    out = model(graph, model.build_attention(graph, epoch))
    return out.x_u, out.x_i


def evaluate_model(model: LecfModel, bundle: GraphBundle, split: int = TEST, ks=(10, 20), graph=None) -> dict:
    graph = graph or TrainGraph.from_bundle(bundle)
    x_u, x_i = final_embeddings(model, graph)
    scores = score_matrix(x_u, x_i, model.config.C)
    # evaluating on train itself must not hide the very items being scored
    exclude = [np.empty(0, dtype=np.int64)] * bundle.n_users if split == TRAIN else bundle.split_items(TRAIN)
    return evaluate_scores(scores, exclude, bundle.split_items(split), ks)


def train(config: TrainConfig, bundle: GraphBundle, graph: TrainGraph | None = None) -> TrainResult:
    """Epoch loop with early stopping on validation Recall@valid_k."""
    graph = graph or TrainGraph.from_bundle(bundle)
    model = LecfModel.for_graph(config, graph)
    result = TrainResult(model)
    if config.epochs == 0:
        return result
    opt = RiemannianSGD(param_groups(model, config.weight_decay), lr=config.lr, C=config.C)
    positives = user_positives(graph.ui_users.numpy(), graph.ui_items.numpy(), graph.n_users)
    exclude = bundle.split_items(TRAIN)
    valid = bundle.split_items(VALID)
    key = f"recall@{config.valid_k}"
    best, best_state, stale = -np.inf, None, 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        loss = train_step(model, graph, positives, epoch, opt)
        x_u, x_i = final_embeddings(model, graph, epoch)
        metrics = evaluate_scores(score_matrix(x_u, x_i, config.C), exclude, valid, (config.valid_k,))
        result.history.append(dict(epoch=epoch, loss=loss, **{f"valid_{k}": v for k, v in metrics.items()},
                                   seconds=time.perf_counter() - t0))
        if not np.isfinite(loss):
            log.error("loss became non-finite at epoch %d", epoch)
            break
        if metrics[key] > best:
            best, best_state, stale = metrics[key], copy.deepcopy(model.state_dict()), 0
            result.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    return result


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(model: LecfModel, path, extra: dict | None = None) -> None:
    """npz container: every parameter tensor plus a JSON ``__meta__`` entry."""
    meta = dict(
        format=CHECKPOINT_FORMAT,
        version=CHECKPOINT_VERSION,
        config=model.config.to_dict(),
        shape=dict(n_users=model.n_users, n_items=model.n_items, n_entities=model.entity.shape[0],
                   n_relations=model.relation.shape[0]),
        **(extra or {}),
    )
    arrays = {k: v.detach().numpy() for k, v in model.state_dict().items()}
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[LecfModel, dict]:
    with np.load(path, allow_pickle=False) as z:
        if "__meta__" not in z.files:
            raise DataError(f"{path}: missing checkpoint metadata")
        meta = json.loads(str(z["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint format/version")
        state = {k: torch.as_tensor(z[k]) for k in z.files if k != "__meta__"}
    model = LecfModel(TrainConfig(**meta["config"]), **meta["shape"])
    model.load_state_dict(state)
    return model, meta


def check_compatible(meta: dict, bundle: GraphBundle) -> None:
    shape = meta["shape"]
    got = dict(n_users=bundle.n_users, n_items=bundle.n_items, n_entities=bundle.n_entities,
               n_relations=bundle.n_relations)
    if shape != got:
        raise DataError(f"checkpoint was trained on a different bundle: {shape} vs {got}")


# -- probes ------------------------------------------------------------------


def _test_items(bundle: GraphBundle) -> torch.Tensor:
    items = np.unique(bundle.interactions[bundle.split == TEST, 1])
    return torch.as_tensor(items, dtype=torch.long)


@torch.no_grad()
def equivariance_probe(model: LecfModel, bundle: GraphBundle, probe: ProbeConfig, ks=(10, 20)) -> dict:
    """Score and metric changes after a Lorentz transformation.

    joint: the transform hits every final user and item embedding.
    test_only: it hits the input item embeddings of test-interaction items,
    then the forward pass is rerun.
    """
    C = model.config.C
    graph = TrainGraph.from_bundle(bundle)
    A = probe.transform(model.config.dim)
    exclude, relevant = bundle.split_items(TRAIN), bundle.split_items(TEST)
    x_u, x_i = final_embeddings(model, graph)
    base = score_matrix(x_u, x_i, C)
    if probe.mode == "joint":
        new = score_matrix(A.apply(x_u), A.apply(x_i), C)
    else:
        moved = copy.deepcopy(model)
        idx = _test_items(bundle)
        moved.item_x[idx] = A.apply(moved.item_x[idx])
        x_u2, x_i2 = final_embeddings(moved, graph)
        new = score_matrix(x_u2, x_i2, C)
    m0 = evaluate_scores(base, exclude, relevant, ks)
    m1 = evaluate_scores(new, exclude, relevant, ks)
    delta = (new - base).abs()
    return dict(
        probe=dict(alpha=probe.alpha, beta=probe.beta, mode=probe.mode),
        mean_abs_score_delta=float(delta.mean()),
        max_rel_score_delta=float((delta / base).max()),
        metrics_before=m0,
        metrics_after=m1,
        metric_deltas={k: m1[k] - m0[k] for k in m0 if "@" in k},
    )


def drop_edges(bundle: GraphBundle, p_e: float, seed: int) -> tuple[GraphBundle, int]:
    """Remove round(p_e * |train|) training interactions uniformly at random."""
    train_idx = np.flatnonzero(bundle.split == TRAIN)
    n_drop = int(round(p_e * len(train_idx)))
    rng = np.random.default_rng(seed)
    drop = rng.choice(train_idx, size=n_drop, replace=False)
    keep = np.ones(len(bundle.interactions), dtype=bool)
    keep[drop] = False
    return replace(bundle, interactions=bundle.interactions[keep], split=bundle.split[keep]), n_drop


def sparsity_probe(config: TrainConfig, bundle: GraphBundle, p_values, seed: int = 0, ks=(10, 20)) -> list[dict]:
    """Retrain on edge-dropped training graphs and evaluate on the test split."""
    rows = []
    for p_e in p_values:
        ProbeConfig(p_e=p_e)
        b, n_drop = drop_edges(bundle, p_e, seed)
        train_users = np.unique(b.interactions[b.split == TRAIN, 0])
        has_train = np.zeros(b.n_users, dtype=bool)
        has_train[train_users] = True
        skipped = int(b.n_users - has_train.sum())
        if skipped:
            log.warning("p_e=%.2f leaves %d user(s) without training items; they are not evaluated", p_e, skipped)
            keep = has_train[b.interactions[:, 0]]
            b = replace(b, split=np.where(keep, b.split, -1).astype(np.int8))
        t0 = time.perf_counter()
        res = train(config, b)
        seconds = time.perf_counter() - t0
        m = evaluate_model(res.model, b, TEST, ks)
        rows.append(dict(p_e=p_e, removed=n_drop, skipped_users=skipped, train_seconds=seconds, **m))
    return rows
