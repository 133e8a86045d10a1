"""Central finite differences as an independent gradient oracle."""

import numpy as np
import torch


def sample_coords(shape, k, rng):
    total = int(np.prod(shape))
    flat = rng.choice(total, size=min(k, total), replace=False)
    return [np.unravel_index(i, shape) for i in flat]


@torch.no_grad()
def central_difference(loss_fn, param, idx, step=1e-5):
    old = param[idx].item()
    param[idx] = old + step
    up = float(loss_fn())
    param[idx] = old - step
    down = float(loss_fn())
    param[idx] = old
    return (up - down) / (2 * step)


def compare(analytic, numeric, floor):
    """Relative error with a denominator floor for gradients that vanish identically."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_groups(model, loss_fn, k=10, step=1e-5, seed=0, floor=1e-6):
    """Per named parameter: list of (index, analytic, numeric, rel_error)."""
    model.zero_grad()
    loss_fn().backward()
    rng = np.random.default_rng(seed)
    report = {}
    for name, p in model.named_parameters():
        if p.numel() == 0:
            continue
        g = p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
        rows = []
        for idx in sample_coords(tuple(p.shape), k, rng):
            num = central_difference(loss_fn, p, idx, step)
            ana = float(g[idx])
            rows.append((idx, ana, num, compare(ana, num, floor)))
        report[name] = rows
    return report
