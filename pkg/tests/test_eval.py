import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lecf.dataio import TEST, TRAIN
from lecf.errors import UsageError
from lecf.evaluation import (
    ProbeConfig, evaluate_scores, ndcg_at_k, random_baseline, rank_items, recall_at_k, records,
)
from lecf.model import TrainConfig
from lecf.synthetic import SyntheticSpec, synthetic_bundle
from lecf.train import drop_edges, equivariance_probe, evaluate_model, sparsity_probe, train

TINY = SyntheticSpec(n_users=12, n_items=10, block_items=4, n_entities=30, per_user=4, attrs_per_item=2, low_ratings=1)
CFG = dict(dim=4, L1=1, L2=1, t=3, epochs=3, patience=5, valid_k=5, lr=0.05)


def test_recall_examples():
    assert recall_at_k([1, 2, 3], {1, 3}, 3) == 1.0
    assert recall_at_k([4, 5], {1, 3}, 2) == 0.0
    assert recall_at_k([1, 5], {1, 3}, 2) == 0.5
    assert math.isnan(recall_at_k([1], set(), 1))


def test_ndcg_examples():
    assert ndcg_at_k([7, 1], {7}, 2) == 1.0
    assert ndcg_at_k([1, 7], {7}, 2) == pytest.approx(1 / math.log2(3), abs=1e-12)
    assert 1 / math.log2(3) == pytest.approx(0.6309, abs=1e-4)
    assert ndcg_at_k([1, 2], {7}, 2) == 0.0


@given(st.permutations(range(12)), st.sets(st.integers(0, 11), min_size=1), st.integers(1, 12))
def test_metric_bounds(ranked, relevant, k):
    for f in (recall_at_k, ndcg_at_k):
        assert 0.0 <= f(ranked, relevant, k) <= 1.0 + 1e-12


def test_rank_items_excludes_training_and_breaks_ties_by_id():
    scores = np.array([[0.5, 0.9, 0.5, 0.5, 0.1]])
    top = rank_items(scores, [np.array([1])], 4)[0]
    assert top.tolist() == [0, 2, 3, 4]


@given(st.integers(0, 2**31))
def test_training_items_never_ranked(seed):
    rng = np.random.default_rng(seed)
    scores = rng.random((5, 20))
    exclude = [rng.choice(20, size=rng.integers(0, 19), replace=False) for _ in range(5)]
    for u, top in enumerate(rank_items(scores, exclude, 20)):
        assert not set(top.tolist()) & set(exclude[u].tolist())
        assert len(top) == 20 - len(exclude[u])


def test_evaluate_skips_users_without_relevant_items():
    scores = np.array([[0.9, 0.1, 0.5], [0.1, 0.2, 0.3]])
    m = evaluate_scores(scores, [np.array([], dtype=int)] * 2, [np.array([0]), np.array([], dtype=int)], (1,))
    assert m == {"recall@1": 1.0, "ndcg@1": 1.0, "n_users": 1}


def test_random_baseline_matches_expectation():
    n_items, k = 50, 10
    exclude = [np.arange(u % 5) for u in range(40)]
    relevant = [np.array([45, 46]) for _ in range(40)]
    expected = np.mean([k / (n_items - len(e)) for e in exclude])
    assert random_baseline(exclude, relevant, n_items, k, repeats=200) == pytest.approx(expected, abs=0.01)


def test_probe_config():
    with pytest.raises(UsageError):
        ProbeConfig(p_e=1.0)
    with pytest.raises(UsageError):
        ProbeConfig(mode="test")
    A = ProbeConfig().transform(4)
    assert np.array_equal(A.entries.numpy(), np.eye(5))
    assert ProbeConfig(alpha=2.0, beta=1.0).transform(4).is_metric_compatible(1e-8)


def test_records_format():
    recs = records({"recall@10": 0.5, "ndcg@10": 0.25, "n_users": 3}, "test", 7, dict(alpha=1.0))
    assert recs == [
        dict(metric="recall", K=10, value=0.5, split="test", probe=dict(alpha=1.0), seed=7),
        dict(metric="ndcg", K=10, value=0.25, split="test", probe=dict(alpha=1.0), seed=7),
    ]


# -- probes on a trained model -------------------------------------------------------


@pytest.fixture(scope="module")
def trained():
    b = synthetic_bundle(TINY)
    return b, train(TrainConfig(**CFG), b).model


def test_identity_probe_has_zero_deltas(trained):
    b, model = trained
    for mode in ("joint", "test_only"):
        r = equivariance_probe(model, b, ProbeConfig(0.0, 0.0, mode=mode))
        assert r["mean_abs_score_delta"] == 0.0
        assert all(v == 0.0 for v in r["metric_deltas"].values())


def test_joint_boost_leaves_metrics_unchanged(trained):
    b, model = trained
    r = equivariance_probe(model, b, ProbeConfig(alpha=2.0, beta=0.3))
    assert r["metric_deltas"]["recall@20"] == 0.0
    assert r["metrics_before"] == r["metrics_after"]
    assert r["max_rel_score_delta"] <= 1e-8


def test_train_split_evaluation_of_memorized_scores(trained):
    b, model = trained
    m = evaluate_model(model, b, TRAIN, (10,))
    assert 0.0 <= m["recall@10"] <= 1.0  # candidate set includes the training items here
    scores = np.zeros((b.n_users, b.n_items))
    for u, items in enumerate(b.split_items(TRAIN)):
        scores[u, items] = 1.0
    empty = [np.array([], dtype=int)] * b.n_users
    assert evaluate_scores(scores, empty, b.split_items(TRAIN), (10,))["recall@10"] == 1.0


def test_drop_edges_count():
    b = synthetic_bundle(TINY)
    n_train = int((b.split == TRAIN).sum())
    for p in (0.0, 0.25, 0.5):
        d, n = drop_edges(b, p, 0)
        assert n == round(p * n_train)
        assert int((d.split == TRAIN).sum()) == n_train - n
        assert int((d.split == TEST).sum()) == int((b.split == TEST).sum())


def test_sparsity_probe_zero_matches_baseline():
    b = synthetic_bundle(TINY)
    cfg = TrainConfig(**CFG)
    base = evaluate_model(train(cfg, b).model, b, TEST)
    rows = sparsity_probe(cfg, b, [0.0, 0.5])
    assert rows[0]["removed"] == 0
    assert {k: rows[0][k] for k in base} == base
    assert rows[1]["removed"] > 0
