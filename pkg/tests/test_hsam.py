import itertools
import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_points
from lecf.errors import DataError, UsageError
from lecf.hsam import (
    AttentionParams, edge_attention, kg_edge_attention, neighbor_entropy, node_attention, random_select,
    select_edges, sparse_select,
)
from lecf.lecf_layer import LorentzMapHead
from lecf.manifold import origin, project_to_hyperboloid, random_transform

O = origin(2)


def at_distance(d, angle=0.0):
    return torch.tensor([math.cosh(d), math.sinh(d) * math.cos(angle), math.sinh(d) * math.sin(angle)],
                        dtype=torch.float64)


def test_params_validation():
    with pytest.raises(UsageError):
        AttentionParams(t=0)
    with pytest.raises(UsageError):
        AttentionParams(gamma_mode="lorentz")


def test_equal_distances_split_evenly():
    a = node_attention(O, torch.stack([at_distance(1.3, 0.2), at_distance(1.3, 2.0)]))
    assert a.tolist() == pytest.approx([0.5, 0.5], abs=1e-12)


def test_single_neighbor_gets_one():
    assert node_attention(O, at_distance(0.7).unsqueeze(0)).tolist() == pytest.approx([1.0], abs=1e-15)


def test_hand_evaluated_coefficients():
    a = node_attention(O, torch.stack([at_distance(1.0), at_distance(2.0)]), w=-1.0)
    e1, e2 = math.exp(-1), math.exp(-2)
    assert a.tolist() == pytest.approx([e1 / (e1 + e2), e2 / (e1 + e2)], abs=1e-12)
    assert a.tolist() == pytest.approx([0.7311, 0.2689], abs=5e-5)


def test_no_neighbors_gives_empty_row():
    assert node_attention(O, torch.zeros(0, 3, dtype=torch.float64)).numel() == 0


def test_large_distances_do_not_underflow():
    # exp(-800) underflows to 0 without the per-row shift
    a = node_attention(O, torch.stack([at_distance(2.0), at_distance(2.001)]), w=-400.0)
    assert torch.isfinite(a).all() and float(a.sum()) == pytest.approx(1.0)
    assert float(a[0]) == pytest.approx(1 / (1 + math.exp(-0.4)), rel=1e-9)


def _random_graph(rng, n_src, n_dst, n_edges):
    pairs = {(int(rng.integers(n_src)), int(rng.integers(n_dst))) for _ in range(n_edges)}
    src, dst = map(np.array, zip(*sorted(pairs)))
    return torch.as_tensor(src), torch.as_tensor(dst)


@given(st.integers(0, 2**31))
def test_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    src, dst = _random_graph(rng, 6, 9, 30)
    xs, xd = random_points(rng, 6, 4), random_points(rng, 9, 4)
    a = edge_attention(src, dst, xs, xd, -1.0)
    row = torch.zeros(6, dtype=torch.float64).index_add(0, src, a)
    present = torch.bincount(src, minlength=6) > 0
    assert float((row[present] - 1).abs().max()) <= 1e-12


@given(st.integers(0, 2**31))
def test_unit_gamma_attention_is_lorentz_invariant(seed):
    rng = np.random.default_rng(seed)
    src, dst = _random_graph(rng, 5, 7, 20)
    xs, xd = random_points(rng, 5, 3), random_points(rng, 7, 3)
    A = random_transform(seed, (-2, 2), 3)
    a0 = edge_attention(src, dst, xs, xd, -0.8)
    a1 = edge_attention(src, dst, A.apply(xs), A.apply(xd), -0.8)
    assert float((a0 - a1).abs().max()) <= 1e-10


def test_time_gamma_is_not_boost_invariant(rng):
    src, dst = _random_graph(rng, 4, 6, 15)
    xs, xd = random_points(rng, 4, 3), random_points(rng, 6, 3)
    A = random_transform(3, (1.5, 2.0), 3)
    a0 = edge_attention(src, dst, xs, xd, -1.0, "time")
    a1 = edge_attention(src, dst, A.apply(xs), A.apply(xd), -1.0, "time")
    assert float((a0 - a1).abs().max()) > 1e-6


# -- KG attention ----------------------------------------------------------------


def _head(n, seed=0):
    torch.manual_seed(seed)
    return LorentzMapHead(n, n)


def test_kg_single_neighbor():
    head = _head(2)
    ent, rel = random_points(np.random.default_rng(0), 3, 2), torch.randn(2, 2, dtype=torch.float64)
    a = kg_edge_attention([0], [1], [2], ent, rel, head)
    assert a.tolist() == pytest.approx([1.0], abs=1e-15)


def test_kg_equal_transformed_distances():
    head = _head(2)
    with torch.no_grad():
        head.wmap.weight.zero_()
        head.wmap.bias.zero_()  # f_r(e) is the origin for every head entity
    ent = torch.stack([O, at_distance(1.1, 0.3), at_distance(1.1, 2.5)])
    rel = torch.randn(1, 2, dtype=torch.float64)
    a = kg_edge_attention([0, 0], [0, 0], [1, 2], ent, rel, head)
    assert a.tolist() == pytest.approx([0.5, 0.5], abs=1e-12)


def test_kg_matches_step_by_step_oracle():
    n = 3
    head = _head(n, seed=5)
    with torch.no_grad():
        head.v.copy_(torch.tensor([1.0, 0.2, -0.1, 0.3], dtype=torch.float64))
    rng = np.random.default_rng(9)
    ent = random_points(rng, 4, n)
    rel = torch.as_tensor(rng.normal(size=(2, n)))
    src, r, dst = [0, 0], [0, 1], [2, 3]

    Wt = head.wmap.weight.detach().numpy()
    bt = head.wmap.bias.detach().numpy()
    v = head.v.detach().numpy()
    E = ent.numpy()
    ab = []
    for s, k, d in zip(src, r, dst):
        W = (Wt @ rel[k].numpy() + bt).reshape(n, n + 1)
        x = E[s]
        Wx = W @ x
        f = np.vstack([np.sqrt(Wx @ Wx + 1.0) / (v @ x) * v, W])
        fx = f @ x
        inner = -fx[0] * E[d][0] + fx[1:] @ E[d][1:]
        ab.append(math.exp(math.acosh(max(1.0, -inner))))
    expected = np.array(ab) / sum(ab)
    got = kg_edge_attention(src, r, dst, ent, rel, head).detach().numpy()
    np.testing.assert_allclose(got, expected, rtol=1e-12)


def test_kg_unknown_relation():
    head = _head(2)
    ent, rel = random_points(np.random.default_rng(0), 3, 2), torch.randn(2, 2, dtype=torch.float64)
    with pytest.raises(DataError):
        kg_edge_attention([0], [2], [1], ent, rel, head)


# -- entropy and selection ---------------------------------------------------


def test_entropy_one_hot_is_zero():
    m = neighbor_entropy([0, 0], torch.tensor([1000.0, 0.0], dtype=torch.float64), 1)
    assert float(m[0]) == pytest.approx(0.0, abs=1e-12)


def test_entropy_uniform_four():
    m = neighbor_entropy([0, 0, 0, 0], torch.full((4,), 0.25, dtype=torch.float64), 1)
    assert float(m[0]) == pytest.approx(math.log(4), abs=1e-12)
    assert math.log(4) == pytest.approx(1.3863, abs=1e-4)


def test_entropy_isolated_is_inf():
    m = neighbor_entropy([1], torch.tensor([0.3], dtype=torch.float64), 3)
    assert math.isinf(float(m[0])) and math.isinf(float(m[2]))
    assert float(m[1]) == 0.0


@given(st.integers(0, 2**31))
def test_entropy_upper_bound(seed):
    rng = np.random.default_rng(seed)
    dst = rng.integers(0, 6, size=25)
    coef = torch.as_tensor(rng.random(25))
    m = neighbor_entropy(dst, coef, 6)
    deg = np.bincount(dst, minlength=6)
    for j in range(6):
        if deg[j]:
            assert 0.0 <= float(m[j]) <= math.log(deg[j]) + 1e-12


def test_select_keeps_everything_when_t_large():
    keep = sparse_select([0, 0, 0], [7, 3, 5], np.arange(8.0), t=5)
    assert keep.all()


def test_select_tie_break_by_id():
    m = np.zeros(8)
    m[[7, 3, 5]] = [0.5, 0.5, 0.9]
    keep = sparse_select([0, 0, 0], [7, 3, 5], m, t=1)
    assert keep.tolist() == [False, True, False]


def test_select_rejects_t_zero():
    with pytest.raises(UsageError):
        sparse_select([0], [0], [0.0], 0)


@given(st.integers(0, 2**31), st.integers(1, 6))
def test_select_row_length_at_most_t(seed, t):
    rng = np.random.default_rng(seed)
    src, dst = rng.integers(0, 5, 40), rng.integers(0, 12, 40)
    keep = sparse_select(src, dst, rng.random(12), t)
    counts = np.bincount(src[keep], minlength=5)
    deg = np.bincount(src, minlength=5)
    assert (counts == np.minimum(deg, t)).all()


def brute_force_select(src, dst, m, t):
    """For each query enumerate all t-subsets and keep the lexicographically best."""
    keep = set()
    for q in sorted(set(src)):
        edges = [e for e in range(len(src)) if src[e] == q]
        size = min(t, len(edges))
        best = min(itertools.combinations(edges, size), key=lambda c: sorted((m[dst[e]], dst[e]) for e in c))
        keep.update(best)
    return np.array([e in keep for e in range(len(src))])


def twenty_node_graph():
    """Fixed 20-node graph with entropies that include exact ties."""
    rng = np.random.default_rng(20)
    edges = sorted({(int(a), int(b)) for a, b in rng.integers(0, 20, size=(90, 2)) if a != b})
    src, dst = map(np.array, zip(*edges))
    coef = np.round(rng.random(len(src)), 1)  # coarse values produce ties in m
    return src, dst, coef


@pytest.mark.parametrize("t", [1, 2, 4])
def test_select_matches_brute_force(t):
    src, dst, coef = twenty_node_graph()
    m = neighbor_entropy(dst, torch.as_tensor(coef), 20).numpy()
    got = select_edges(src, dst, torch.as_tensor(coef), 20, t)
    assert np.array_equal(got, brute_force_select(src, dst, m, t))


def test_random_select_deterministic_and_bounded():
    src = np.repeat(np.arange(4), 5)
    a = random_select(src, 2, np.random.default_rng(1))
    b = random_select(src, 2, np.random.default_rng(1))
    assert np.array_equal(a, b)
    assert (np.bincount(src[a], minlength=4) == 2).all()
