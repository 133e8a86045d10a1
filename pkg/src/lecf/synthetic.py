"""Planted-preference toy data with a KG that encodes the latent blocks."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import GraphBundle, binarize, build_bundle, build_khop_kg, kg_from_rows, split


@dataclass
class SyntheticSpec:
    n_users: int = 200
    n_items: int = 100
    n_blocks: int = 2
    block_items: int = 20  # preferred items per block; the rest are background
    n_entities: int = 300
    per_user: int = 6
    p_in_block: float = 0.9
    attrs_per_item: int = 3
    low_ratings: int = 2  # extra rows per user rated below the threshold
    seed: int = 0


def make_synthetic(spec: SyntheticSpec = SyntheticSpec()):
    """Return (rating rows, triple rows, item map rows) as string tuples.

    Users in block b pick most of their items from block b's item pool. Item
    entity ``ent_i`` links to attribute entities of its block through the
    block's own relation; background items link to generic attributes.
    """
    rng = np.random.default_rng(spec.seed)
    B = spec.n_blocks
    pools = [np.arange(b * spec.block_items, (b + 1) * spec.block_items) for b in range(B)]

    ratings = []
    for u in range(spec.n_users):
        b = u % B
        n_in = rng.binomial(spec.per_user, spec.p_in_block)
        chosen = list(rng.choice(pools[b], size=min(n_in, len(pools[b])), replace=False))
        others = np.setdiff1d(np.arange(spec.n_items), pools[b])
        chosen += list(rng.choice(others, size=spec.per_user - len(chosen), replace=False))
        for i in chosen:
            ratings.append((f"u{u}", f"i{i}", str(int(rng.integers(4, 6)))))
        for i in rng.choice(spec.n_items, size=spec.low_ratings, replace=False):
            ratings.append((f"u{u}", f"i{i}", str(int(rng.integers(1, 4)))))

    # attribute entities: one pool per block plus a generic pool
    n_attr = spec.n_entities - spec.n_items
    per_pool = n_attr // (B + 1)
    attr_pools = [spec.n_items + np.arange(b * per_pool, (b + 1) * per_pool) for b in range(B + 1)]
    attr_pools[B] = np.arange(spec.n_items + B * per_pool, spec.n_entities)

    triples = []
    for i in range(spec.n_items):
        b = i // spec.block_items if i < B * spec.block_items else B
        rel = f"in_block_{b}" if b < B else "generic"
        for a in rng.choice(attr_pools[b], size=spec.attrs_per_item, replace=False):
            triples.append((f"ent{i}", rel, f"ent{a}"))
    for b in range(B + 1):
        pool = attr_pools[b]
        for a in pool:
            c = int(rng.choice(pool))
            if c != a:
                triples.append((f"ent{a}", "related", f"ent{c}"))

    item_map = [(f"i{i}", f"ent{i}") for i in range(spec.n_items)]
    return ratings, triples, item_map


def write_tsv(rows, path) -> None:
    Path(path).write_text("".join("\t".join(r) + "\n" for r in rows), encoding="utf-8")


def write_synthetic(out_dir, spec: SyntheticSpec = SyntheticSpec()) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ratings, triples, item_map = make_synthetic(spec)
    paths = dict(interactions=out_dir / "ratings.tsv", triples=out_dir / "kg.tsv", item_map=out_dir / "item_map.tsv")
    write_tsv(ratings, paths["interactions"])
    write_tsv(triples, paths["triples"])
    write_tsv(item_map, paths["item_map"])
    return paths


def synthetic_bundle(spec: SyntheticSpec = SyntheticSpec(), split_seed: int = 0) -> GraphBundle:
    """Preprocessed bundle built in memory.

    Skips the frequency filter: at toy scale it would prune most attributes.
    """
    ratings, triples, item_map = make_synthetic(spec)
    pairs, _ = binarize(ratings)
    b = build_bundle(pairs, kg_from_rows(triples), dict(item_map))
    return split(build_khop_kg(b, 2), split_seed)
