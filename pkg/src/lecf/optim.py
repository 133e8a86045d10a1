"""Riemannian SGD on the hyperboloid, plain SGD for Euclidean weights."""

from __future__ import annotations

import logging

import torch
from torch.optim.optimizer import Optimizer

from .manifold import exp_map, reproject, tangent_project

log = logging.getLogger(__name__)


def riemannian_grad(x: torch.Tensor, egrad: torch.Tensor, C: float = 1.0) -> torch.Tensor:
    """Euclidean gradient -> tangent vector at x (apply g_L^{-1}, then project)."""
    h = egrad.clone()
    h[..., 0] = -h[..., 0]
    return tangent_project(x, h, C)


class RiemannianSGD(Optimizer):
    """SGD whose manifold groups step along the exponential map.

    Groups flagged ``manifold=True`` hold hyperboloid point tables (rows are
    points). Weight decay pulls Euclidean weights, and the spatial part of
    manifold points, toward zero.
    """

    def __init__(self, params, lr: float, weight_decay: float = 0.0, C: float = 1.0):
        defaults = dict(lr=lr, weight_decay=weight_decay, manifold=False, C=C)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            lr, wd, C = group["lr"], group["weight_decay"], group["C"]
            for p in group["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                if not bool(torch.isfinite(grad).all()):
                    log.warning("non-finite gradient for tensor of shape %s; step skipped", tuple(p.shape))
                    continue
                if group["manifold"]:
                    if wd:
                        grad = grad.clone()
                        grad[..., 1:] += wd * p[..., 1:]
                    h = riemannian_grad(p, grad, C)
                    p.copy_(reproject(exp_map(p, -lr * h, C), C))
                else:
                    if wd:
                        grad = grad + wd * p
                    p.add_(grad, alpha=-lr)
        return loss


def riemannian_sgd_step(model, lr: float, weight_decay: float = 0.0) -> None:
    """One in-place update using gradients already stored on ``model``."""
    RiemannianSGD(param_groups(model, weight_decay), lr=lr, C=model.config.C).step()


def param_groups(model, weight_decay: float) -> list[dict]:
    cfg = model.config
    return [
        dict(params=model.manifold_parameters(), manifold=True, weight_decay=weight_decay, lr=cfg.lr),
        dict(params=model.euclidean_parameters(), manifold=False, weight_decay=weight_decay,
             lr=cfg.lr * cfg.euclid_lr_scale),
    ]
