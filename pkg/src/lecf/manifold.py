"""Lorentz (hyperboloid) model of hyperbolic space.

Points live on ``{x : <x, x>_L = -C, x_0 > 0}`` in R^{n+1}; coordinate 0 is the
time axis. Every function accepts batched tensors with coordinates on the last
dimension and works in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import DegenerateInputError, DomainError, UsageError

DTYPE = torch.float64
ACOSH_MAX = 1e15
MANIFOLD_TOL = 1e-9
NEAR_Z = 2.0


def as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x if x.dtype == DTYPE else x.to(DTYPE)
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def metric(dim: int) -> torch.Tensor:
    """g_L = diag(-1, 1, ..., 1) for ``dim`` = n + 1 coordinates."""
    g = torch.eye(dim, dtype=DTYPE)
    g[0, 0] = -1.0
    return g


def lorentz_inner(x, y) -> torch.Tensor:
    x, y = as_tensor(x), as_tensor(y)
    if x.shape[-1] != y.shape[-1]:
        raise UsageError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    prod = x * y
    return prod[..., 1:].sum(-1) - prod[..., 0]


def lorentz_norm(v) -> torch.Tensor:
    # |.| inside the root keeps the norm real for time-like vectors
    return torch.sqrt(torch.abs(lorentz_inner(v, v)))


def manifold_error(x, C: float = 1.0) -> torch.Tensor:
    """|<x,x>_L + C| per point."""
    return torch.abs(lorentz_inner(x, x) + C)


def check_on_manifold(x, C: float = 1.0, tol: float = 1e-6) -> None:
    # relative to x_0^2 because <x,x>_L cancels two numbers of that size
    x = as_tensor(x)
    scale = torch.clamp(x[..., 0] ** 2, min=1.0)
    bad = (manifold_error(x, C) > tol * scale) | (x[..., 0] <= 0)
    if bool(bad.any()):
        raise DomainError(f"{int(bad.sum())} point(s) off the hyperboloid (C={C})")


def lorentz_distance(x, y, C: float = 1.0, check: bool = True) -> torch.Tensor:
    x, y = as_tensor(x), as_tensor(y)
    if check:
        check_on_manifold(x, C)
        check_on_manifold(y, C)
    sqc = math.sqrt(C)
    z = torch.clamp(-lorentz_inner(x, y) / C, min=1.0, max=ACOSH_MAX)
    # acosh loses half the digits near z = 1; short arcs use the chord form
    # 2 asinh(‖x - y‖_L / 2), which is the same function there
    near = z < NEAR_Z
    diff = x - y
    q = torch.clamp(lorentz_inner(diff, diff), min=0.0)
    q = torch.where(near, q, torch.ones_like(q))
    z = torch.where(near, torch.full_like(z, NEAR_Z), z)
    chord = 2.0 * sqc * torch.asinh(torch.sqrt(q) / (2.0 * sqc))
    return torch.where(near, chord, sqc * torch.acosh(z))


def project_to_hyperboloid(spatial, C: float = 1.0) -> torch.Tensor:
    """Lift spatial coordinates onto the hyperboloid by solving for x_0."""
    s = as_tensor(spatial)
    t = torch.sqrt(C + (s * s).sum(-1, keepdim=True))
    return torch.cat([t, s], dim=-1)


def reproject(x, C: float = 1.0) -> torch.Tensor:
    """Snap a drifted point back onto the hyperboloid, keeping its spatial part."""
    return project_to_hyperboloid(as_tensor(x)[..., 1:], C)


def normalize_timelike(s, C: float = 1.0) -> torch.Tensor:
    """sqrt(C) * s / |‖s‖_L| -- the closed-form centroid normalization."""
    s = as_tensor(s)
    nrm = lorentz_norm(s)
    if bool((nrm == 0).any()):
        raise DegenerateInputError("Lorentz norm of the weighted sum is zero")
    return math.sqrt(C) * s / nrm.unsqueeze(-1)


def origin(n: int, C: float = 1.0) -> torch.Tensor:
    o = torch.zeros(n + 1, dtype=DTYPE)
    o[0] = math.sqrt(C)
    return o


def tangent_project(x, h, C: float = 1.0) -> torch.Tensor:
    """Project ambient vector h onto the tangent space at x."""
    return h + (lorentz_inner(x, h) / C).unsqueeze(-1) * x


def exp_map(x, v, C: float = 1.0) -> torch.Tensor:
    """Exponential map at x of a tangent vector v."""
    sqc = math.sqrt(C)
    vn = lorentz_norm(v).unsqueeze(-1)
    theta = vn / sqc
    # sinh(theta)/theta -> 1 as theta -> 0
    safe = torch.where(theta > 1e-12, theta, torch.ones_like(theta))
    coef = torch.where(theta > 1e-12, torch.sinh(safe) / safe, torch.ones_like(theta))
    return torch.cosh(theta) * x + coef * v


@dataclass(frozen=True)
class LorentzMap:
    """An (n+1)x(n+1) matrix acting on hyperboloid points from the left."""

    entries: torch.Tensor
    kind: str = "composite"

    @property
    def dim(self) -> int:
        return self.entries.shape[-1]

    def apply(self, x) -> torch.Tensor:
        # entries may carry a batch of per-point matrices
        return torch.einsum("...ij,...j->...i", self.entries, as_tensor(x))

    def __matmul__(self, other: "LorentzMap") -> "LorentzMap":
        return LorentzMap(self.entries @ other.entries, "composite")

    def metric_defect(self) -> float:
        g = metric(self.dim)
        return float((self.entries @ g @ self.entries.T - g).abs().max())

    def is_metric_compatible(self, tol: float = 1e-9) -> bool:
        return self.metric_defect() <= tol and float(self.entries[0, 0]) >= 1.0 - tol


def make_boost(alpha: float, space_axis: int, n: int) -> LorentzMap:
    if not 1 <= space_axis <= n:
        raise UsageError(f"space_axis must be in [1, {n}], got {space_axis}")
    A = torch.eye(n + 1, dtype=DTYPE)
    ch, sh = math.cosh(alpha), math.sinh(alpha)
    A[0, 0] = A[space_axis, space_axis] = ch
    A[0, space_axis] = A[space_axis, 0] = sh
    return LorentzMap(A, "boost")


def make_rotation(R) -> LorentzMap:
    R = as_tensor(R)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise UsageError("rotation must be a square matrix")
    n = R.shape[0]
    if float((R.T @ R - torch.eye(n, dtype=DTYPE)).abs().max()) > 1e-9:
        raise DomainError("rotation block is not orthogonal")
    A = torch.eye(n + 1, dtype=DTYPE)
    A[1:, 1:] = R
    return LorentzMap(A, "rotation")


def planar_rotation(beta: float, n: int, axes: tuple[int, int] = (1, 2)) -> LorentzMap:
    """Rotate by ``beta`` in the plane of two space axes (1-based)."""
    i, j = axes[0] - 1, axes[1] - 1
    R = torch.eye(n, dtype=DTYPE)
    c, s = math.cos(beta), math.sin(beta)
    R[i, i], R[i, j], R[j, i], R[j, j] = c, -s, s, c
    return make_rotation(R)


def random_rotation(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_transform(seed: int, alpha_range: tuple[float, float] = (-2.0, 2.0), n: int = 2) -> LorentzMap:
    """Seeded rotation ∘ boost, the polar form of a proper Lorentz transformation."""
    lo, hi = alpha_range
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise UsageError("alpha_range must be finite")
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(lo, hi)
    R = random_rotation(rng, n)
    return make_rotation(R) @ make_boost(alpha, 1, n)
