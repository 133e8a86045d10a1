import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from conftest import random_points
from lecf.errors import DegenerateInputError, UsageError
from lecf.iag import IagConfig, centroid_aggregate, combine_layers, iag_forward, segment_centroid
from lecf.manifold import lorentz_distance, manifold_error, project_to_hyperboloid, random_transform


def test_config_defaults_and_validation():
    assert IagConfig(3).omega1 == [1.0, 1.0, 1.0]
    with pytest.raises(UsageError):
        IagConfig(0)
    with pytest.raises(UsageError):
        IagConfig(2, [1.0, 0.0])


def test_single_point_is_returned():
    p = random_points(np.random.default_rng(0), 1, 4)
    assert float((centroid_aggregate([1.0], p) - p[0]).abs().max()) <= 1e-12


def test_symmetric_pair_gives_origin():
    p = torch.tensor([[math.cosh(1), math.sinh(1), 0.0], [math.cosh(1), -math.sinh(1), 0.0]], dtype=torch.float64)
    c = centroid_aggregate([0.5, 0.5], p)
    assert c.tolist() == pytest.approx([1.0, 0.0, 0.0], abs=1e-15)


@pytest.mark.parametrize("w", [[0.0, 0.0], [1.0, -0.5]])
def test_degenerate_weights(w):
    p = random_points(np.random.default_rng(0), 2, 3)
    with pytest.raises(DegenerateInputError):
        centroid_aggregate(w, p)


@st.composite
def instance(draw):
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(2, 9)), int(rng.integers(1, 7))
    return seed, random_points(rng, k, n, scale=1.5), torch.as_tensor(rng.uniform(0.05, 1.0, k))


@given(instance(), st.floats(1e-3, 1e3))
def test_scale_invariance(inst, k):
    _, p, w = inst
    a, b = centroid_aggregate(w, p), centroid_aggregate(k * w, p)
    assert float((a - b).abs().max()) <= 1e-12 * float(a[0])


@given(instance())
def test_output_on_manifold(inst):
    _, p, w = inst
    c = centroid_aggregate(w, p)
    assert float(manifold_error(c)) <= 1e-9 * float(c[0]) ** 2
    assert float(c[0]) > 0


@given(instance())
def test_equivariance(inst):
    seed, p, w = inst
    A = random_transform(seed, (-2, 2), p.shape[-1] - 1)
    lhs = centroid_aggregate(w, A.apply(p))
    rhs = A.apply(centroid_aggregate(w, p))
    assert float((lhs - rhs).abs().max()) <= 1e-8 * float(rhs[0])


def _lift(s):
    return np.concatenate([[math.sqrt(1.0 + s @ s)], s])


def _inner(a, b):
    return -a[0] * b[0] + a[1:] @ b[1:]


@pytest.mark.parametrize("seed", range(10))
def test_centroid_minimizes_squared_lorentzian_objective(seed):
    # the closed form is the argmin of sum_j w_j * (-2C - 2<c, p_j>_L)
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(2, 9)), int(rng.integers(2, 7))
    P = random_points(rng, k, n).numpy()
    w = rng.uniform(0.1, 1.0, k)
    obj = lambda s: float(sum(wj * (-2.0 - 2.0 * _inner(_lift(s), p)) for wj, p in zip(w, P)))
    res = minimize(obj, rng.normal(size=n), method="BFGS", options=dict(gtol=1e-12))
    c = centroid_aggregate(w, P)
    assert float(lorentz_distance(_lift(res.x), c)) <= 1e-4


# -- segment centroid and stacking -----------------------------------------------


def test_segment_centroid_fallback_for_empty_rows():
    rng = np.random.default_rng(1)
    pts = random_points(rng, 4, 3)
    fallback = random_points(rng, 3, 3)
    index = torch.tensor([0, 0, 2, 2])
    w = torch.tensor([1.0, 2.0, 0.0, 0.0], dtype=torch.float64)
    out = segment_centroid(index, w, pts, fallback)
    assert torch.allclose(out[0], centroid_aggregate(w[:2], pts[:2]), atol=1e-12)
    assert torch.equal(out[1], fallback[1])
    assert torch.equal(out[2], fallback[2])  # all weights pruned


def test_isolated_nodes_copy_through():
    e = random_points(np.random.default_rng(2), 5, 4)
    empty = torch.zeros(0, dtype=torch.long)
    out = iag_forward(empty, empty, torch.zeros(0, dtype=torch.float64), e, IagConfig(3))
    assert len(out) == 3
    assert all(torch.equal(layer, e) for layer in out)


def test_star_center_gets_centroid_of_leaves():
    e = random_points(np.random.default_rng(3), 6, 3)
    src = torch.zeros(5, dtype=torch.long)
    dst = torch.arange(1, 6)
    coef = torch.full((5,), 0.2, dtype=torch.float64)
    (e1,) = iag_forward(src, dst, coef, e, IagConfig(1))
    assert torch.allclose(e1[0], centroid_aggregate(torch.ones(5), e[1:]), atol=1e-12)
    assert torch.equal(e1[1:], e[1:])


@given(st.integers(0, 2**31))
def test_stacked_layers_stay_on_manifold(seed):
    rng = np.random.default_rng(seed)
    e = random_points(rng, 12, 4, scale=2.0)
    src, dst = (torch.as_tensor(rng.integers(0, 12, 40)) for _ in range(2))
    coef = torch.as_tensor(rng.random(40) * (rng.random(40) < 0.7))
    for layer in iag_forward(src, dst, coef, e, IagConfig(4)):
        assert float((manifold_error(layer) / layer[:, 0] ** 2).max()) <= 1e-9


# -- layer combination ---------------------------------------------------------


def test_combine_single_layer_and_identical_points():
    x = random_points(np.random.default_rng(4), 3, 5)
    assert float((combine_layers([x], [1.0]) - x).abs().max()) <= 1e-12
    assert float((combine_layers([x, x, x], [1.0, 2.0, 0.5]) - x).abs().max()) <= 1e-12


@given(st.integers(0, 2**31), st.floats(0.01, 100.0))
def test_combine_scale_invariance(seed, k):
    rng = np.random.default_rng(seed)
    layers = [random_points(rng, 4, 3) for _ in range(3)]
    omega = rng.uniform(0.1, 1.0, 3).tolist()
    a = combine_layers(layers, omega)
    b = combine_layers(layers, [k * w for w in omega])
    assert float((a - b).abs().max()) <= 1e-12 * float(a[:, 0].max())


def test_combine_doubling_example():
    layers = [random_points(np.random.default_rng(5), 4, 3) for _ in range(2)]
    a = combine_layers(layers, [1.0, 0.5])
    b = combine_layers(layers, [2.0, 1.0])
    assert float((a - b).abs().max()) <= 1e-12


@given(st.permutations(range(3)))
def test_combine_permutation_covariant(perm):
    rng = np.random.default_rng(6)
    layers = [random_points(rng, 4, 3) for _ in range(3)]
    omega = [0.2, 0.5, 0.3]
    a = combine_layers(layers, omega)
    b = combine_layers([layers[i] for i in perm], [omega[i] for i in perm])
    assert float((a - b).abs().max()) <= 1e-12


def test_combine_errors():
    x = random_points(np.random.default_rng(7), 2, 2)
    with pytest.raises(DegenerateInputError):
        combine_layers([x, x], [0.0, 0.0])
    with pytest.raises(UsageError):
        combine_layers([], [])
