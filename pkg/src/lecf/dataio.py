"""Dataset ingestion: TSV parsing, frequency filtering, k-hop KG extraction,
per-user 6:2:2 splits, degree statistics and the bundle file format."""

from __future__ import annotations

import json
import logging
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

BUNDLE_FORMAT = "lecf-bundle"
BUNDLE_VERSION = 1
MAX_MALFORMED = 0.10
TRAIN, VALID, TEST = 0, 1, 2
SPLIT_NAMES = {TRAIN: "train", VALID: "valid", TEST: "test"}
INVERSE_SUFFIX = "^-1"


@dataclass
class GraphBundle:
    users: list[str]
    items: list[str]
    entities: list[str]
    relations: list[str]  # originals first, then their inverses in the same order
    interactions: np.ndarray  # (N, 2) user, item
    triples: np.ndarray  # (M, 3) head, relation, tail
    inverse: np.ndarray  # (M,) bool
    item_entity: np.ndarray  # (n_items,) entity id or -1
    split: np.ndarray = field(default=None)  # (N,) int8, -1 = unassigned

    def __post_init__(self):
        if self.split is None:
            self.split = np.full(len(self.interactions), -1, dtype=np.int8)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def counts(self) -> dict:
        return dict(
            users=self.n_users,
            items=self.n_items,
            interactions=int(len(self.interactions)),
            entities=self.n_entities,
            relations=self.n_relations // 2,
            kg_triples=int((~self.inverse).sum()),
            matched_items=int((self.item_entity >= 0).sum()),
        )

    def split_items(self, which: int) -> list[np.ndarray]:
        """Per-user sorted item arrays for one split."""
        sel = self.split == which
        u, i = self.interactions[sel, 0], self.interactions[sel, 1]
        order = np.lexsort((i, u))
        u, i = u[order], i[order]
        bounds = np.searchsorted(u, np.arange(self.n_users + 1))
        return [i[bounds[k]:bounds[k + 1]] for k in range(self.n_users)]


# -- parsing -----------------------------------------------------------------


def _read_rows(path, n_cols: int) -> tuple[list[list[str]], int]:
    text = Path(path).read_text(encoding="utf-8")
    rows, bad = [], 0
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != n_cols or any(not p.strip() for p in parts):
            bad += 1
            continue
        rows.append([p.strip() for p in parts])
    return rows, bad


def _check_malformed(path, bad: int, total: int) -> None:
    if bad:
        log.warning("%s: skipped %d malformed row(s)", path, bad)
    if total and bad / total > MAX_MALFORMED:
        raise DataError(f"{path}: {bad} of {total} rows malformed")


def binarize(rows, threshold: float = 4) -> tuple[list[tuple[str, str]], int]:
    """Keep (user, item) for rating >= threshold, deduplicated; also count bad ratings."""
    out, seen, bad = [], set(), 0
    for u, i, r in rows:
        try:
            rating = float(r)
        except ValueError:
            bad += 1
            continue
        if rating >= threshold and (u, i) not in seen:
            seen.add((u, i))
            out.append((u, i))
    return out, bad


def load_interactions(path, threshold: float = 4) -> list[tuple[str, str]]:
    """Rows ``user<TAB>item<TAB>rating`` with rating >= threshold, deduplicated."""
    rows, bad = _read_rows(path, 3)
    pairs, bad_rating = binarize(rows, threshold)
    _check_malformed(path, bad + bad_rating, len(rows) + bad)
    return pairs


@dataclass
class RawKG:
    triples: list[tuple[str, int, str]]
    inverse: list[bool]
    relations: list[str]


def kg_from_rows(rows) -> RawKG:
    """Intern relations and append an inverse (tail, r^-1, head) per triple."""
    rel_ids: dict[str, int] = {}
    uniq, seen = [], set()
    for h, r, t in rows:
        if (h, r, t) in seen:
            continue
        seen.add((h, r, t))
        rel_ids.setdefault(r, len(rel_ids))
        uniq.append((h, rel_ids[r], t))
    R = len(rel_ids)
    relations = list(rel_ids) + [n + INVERSE_SUFFIX for n in rel_ids]
    triples = uniq + [(t, r + R, h) for h, r, t in uniq]
    return RawKG(triples, [False] * len(uniq) + [True] * len(uniq), relations)


def load_kg_triples(path) -> RawKG:
    """Rows ``head<TAB>relation<TAB>tail``, inverse edges included."""
    rows, bad = _read_rows(path, 3)
    _check_malformed(path, bad, len(rows) + bad)
    return kg_from_rows(rows)


def load_item_map(path) -> dict[str, str]:
    rows, bad = _read_rows(path, 2)
    _check_malformed(path, bad, len(rows) + bad)
    return {i: e for i, e in rows}


def build_bundle(pairs: list[tuple[str, str]], kg: RawKG, item_map: dict[str, str]) -> GraphBundle:
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    for u, i in pairs:
        users.setdefault(u, len(users))
        items.setdefault(i, len(items))
    inter = np.array([(users[u], items[i]) for u, i in pairs], dtype=np.int64).reshape(-1, 2)

    entities: dict[str, int] = {}
    for item in items:
        if item in item_map:
            entities.setdefault(item_map[item], len(entities))
    for h, _, t in kg.triples:
        entities.setdefault(h, len(entities))
        entities.setdefault(t, len(entities))
    triples = np.array([(entities[h], r, entities[t]) for h, r, t in kg.triples], dtype=np.int64).reshape(-1, 3)
    item_entity = np.array([entities.get(item_map.get(i, ""), -1) if i in item_map else -1 for i in items],
                           dtype=np.int64)
    return GraphBundle(
        users=list(users), items=list(items), entities=list(entities), relations=list(kg.relations),
        interactions=inter, triples=triples, inverse=np.array(kg.inverse, dtype=bool), item_entity=item_entity,
    )


# -- filtering ---------------------------------------------------------------


def _compact_entities(b: GraphBundle, keep_entity: np.ndarray, keep_triple: np.ndarray) -> GraphBundle:
    new_id = np.full(b.n_entities, -1, dtype=np.int64)
    new_id[keep_entity] = np.arange(int(keep_entity.sum()))
    tr = b.triples[keep_triple]
    tr = np.stack([new_id[tr[:, 0]], tr[:, 1], new_id[tr[:, 2]]], axis=1) if len(tr) else tr.reshape(-1, 3)
    ie = np.where(b.item_entity >= 0, new_id[np.maximum(b.item_entity, 0)], -1)
    b = replace(
        b,
        entities=[e for e, k in zip(b.entities, keep_entity) if k],
        triples=tr,
        inverse=b.inverse[keep_triple],
        item_entity=ie,
        split=b.split.copy(),
    )
    return _compact_relations(b)


def _compact_relations(b: GraphBundle) -> GraphBundle:
    R = b.n_relations // 2
    used = np.zeros(R, dtype=bool)
    orig = b.triples[:, 1]
    used[np.where(orig >= R, orig - R, orig)] = True
    if used.all():
        return b
    new_r = np.full(R, -1, dtype=np.int64)
    new_r[used] = np.arange(int(used.sum()))
    R2 = int(used.sum())
    rel = b.triples[:, 1]
    mapped = np.where(rel >= R, new_r[np.maximum(rel - R, 0)] + R2, new_r[np.minimum(rel, R - 1)])
    tr = b.triples.copy()
    tr[:, 1] = mapped
    names = [n for n, k in zip(b.relations[:R], used) if k]
    return replace(b, triples=tr, relations=names + [n + INVERSE_SUFFIX for n in names])


def entity_occurrences(b: GraphBundle) -> np.ndarray:
    """Occurrences of each entity across the KG (original triples) and the
    interaction graph (interactions of the item it is matched to)."""
    occ = np.zeros(b.n_entities, dtype=np.int64)
    orig = b.triples[~b.inverse]
    np.add.at(occ, orig[:, 0], 1)
    np.add.at(occ, orig[:, 2], 1)
    item_deg = np.bincount(b.interactions[:, 1], minlength=b.n_items) if len(b.interactions) else np.zeros(b.n_items, dtype=np.int64)
    m = b.item_entity >= 0
    np.add.at(occ, b.item_entity[m], item_deg[m])
    return occ


def filter_infrequent(b: GraphBundle, min_count: int = 10) -> GraphBundle:
    """Drop entities seen fewer than ``min_count`` times, repeating to a fixpoint."""
    while True:
        occ = entity_occurrences(b)
        keep = occ >= min_count
        if keep.all():
            return b
        keep_t = keep[b.triples[:, 0]] & keep[b.triples[:, 2]] if len(b.triples) else np.zeros(0, dtype=bool)
        b = _compact_entities(b, keep, keep_t)


def hop_distances(b: GraphBundle, k: int) -> np.ndarray:
    """Undirected BFS depth from the matched item entities (-1 = beyond k)."""
    dist = np.full(b.n_entities, -1, dtype=np.int64)
    adj: list[list[int]] = [[] for _ in range(b.n_entities)]
    for h, _, t in b.triples[~b.inverse]:
        adj[h].append(t)
        adj[t].append(h)
    q = deque()
    for e in np.unique(b.item_entity[b.item_entity >= 0]):
        dist[e] = 0
        q.append(int(e))
    while q:
        e = q.popleft()
        if dist[e] >= k:
            continue
        for f in adj[e]:
            if dist[f] < 0:
                dist[f] = dist[e] + 1
                q.append(f)
    return dist


def build_khop_kg(b: GraphBundle, k: int = 2) -> GraphBundle:
    """Keep triples whose two endpoints are within k hops of a matched entity."""
    dist = hop_distances(b, k)
    near = dist >= 0
    keep_t = near[b.triples[:, 0]] & near[b.triples[:, 2]] if len(b.triples) else np.zeros(0, dtype=bool)
    used = np.zeros(b.n_entities, dtype=bool)
    used[b.triples[keep_t, 0]] = True
    used[b.triples[keep_t, 2]] = True
    used[b.item_entity[b.item_entity >= 0]] = True
    return _compact_entities(b, used, keep_t)


# -- splitting ---------------------------------------------------------------


def split(b: GraphBundle, seed: int = 0, ratios=(0.6, 0.2, 0.2)) -> GraphBundle:
    """Per-user random train/valid/test partition.

    Both cut points are rounded with the same random offset, so each part is
    within one interaction of its exact share and the global fractions are
    unbiased. Every user
    keeps at least one training interaction.
    """
    rng = np.random.default_rng(seed)
    out = np.full(len(b.interactions), -1, dtype=np.int8)
    c1, c2 = ratios[0], ratios[0] + ratios[1]
    users = b.interactions[:, 0]
    order = np.argsort(users, kind="stable")
    bounds = np.searchsorted(users[order], np.arange(b.n_users + 1))
    for u in range(b.n_users):
        idx = order[bounds[u]:bounds[u + 1]]
        n = len(idx)
        if n == 0:
            continue
        idx = idx[rng.permutation(n)]
        r = rng.random()  # one offset for both cuts keeps every part within one of its share
        a = int(np.floor(c1 * n + r))
        c = int(np.floor(c2 * n + r))
        a = max(a, 1)
        c = max(c, a)
        out[idx[:a]] = TRAIN
        out[idx[a:c]] = VALID
        out[idx[c:]] = TEST
    return replace(b, split=out)


def preprocess(interactions_path, triples_path, item_map_path, threshold: float = 4, min_count: int = 10,
               k: int = 2, seed: int = 0) -> GraphBundle:
    pairs = load_interactions(interactions_path, threshold)
    kg = load_kg_triples(triples_path)
    item_map = load_item_map(item_map_path)
    b = build_bundle(pairs, kg, item_map)
    b = filter_infrequent(b, min_count)
    b = build_khop_kg(b, k)
    return split(b, seed)


# -- statistics --------------------------------------------------------------


def _histogram(deg: np.ndarray) -> dict[int, int]:
    return {int(d): int(c) for d, c in sorted(Counter(deg.tolist()).items())}


def degree_stats(b: GraphBundle) -> dict[str, dict[int, int]]:
    """(degree -> node count) for the interaction graph and the KG."""
    inter = b.interactions
    ui_deg = np.concatenate([
        np.bincount(inter[:, 0], minlength=b.n_users),
        np.bincount(inter[:, 1], minlength=b.n_items),
    ]) if len(inter) else np.zeros(b.n_users + b.n_items, dtype=np.int64)
    orig = b.triples[~b.inverse]
    kg_deg = np.zeros(b.n_entities, dtype=np.int64)
    np.add.at(kg_deg, orig[:, 0], 1)
    np.add.at(kg_deg, orig[:, 2], 1)
    return {"interaction": _histogram(ui_deg), "kg": _histogram(kg_deg)}


BOOK_CROSSING_REFERENCE = dict(users=17860, items=14967, interactions=139746, entities=77903, relations=25,
                            kg_triples=151500)


# the pipeline stage that mostly decides each count
COUNT_STAGE = dict(users="rating threshold + item matching", items="item matching (KG alignment)",
                   interactions="rating threshold", entities="entity frequency filter",
                   relations="k-hop extraction", kg_triples="entity frequency filter + k-hop extraction")


def compare_to_reference(counts: dict, reference: dict, tol: float = 0.05) -> list[str]:
    """Relative gaps beyond tol, each naming the stage that most likely diverged."""
    problems = []
    for key, ref in reference.items():
        got = counts.get(key)
        if got is None:
            problems.append(f"{key}: missing")
            continue
        gap = abs(got - ref) / ref
        if gap > tol:
            problems.append(f"{key}: {got} vs {ref} ({gap:.1%} off; check {COUNT_STAGE.get(key, 'pipeline')})")
    return problems


# -- bundle file -------------------------------------------------------------


def save_bundle(b: GraphBundle, path) -> None:
    doc = dict(
        format=BUNDLE_FORMAT,
        version=BUNDLE_VERSION,
        counts=b.counts(),
        users=b.users,
        items=b.items,
        entities=b.entities,
        relations=b.relations,
        interactions=b.interactions.tolist(),
        split=b.split.tolist(),
        triples=b.triples.tolist(),
        inverse=b.inverse.astype(int).tolist(),
        item_entity=b.item_entity.tolist(),
    )
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")), encoding="utf-8")
    tmp.replace(path)


def load_bundle(path) -> GraphBundle:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != BUNDLE_FORMAT or doc.get("version") != BUNDLE_VERSION:
        raise DataError(f"{path}: not a {BUNDLE_FORMAT} v{BUNDLE_VERSION} file")
    return GraphBundle(
        users=doc["users"],
        items=doc["items"],
        entities=doc["entities"],
        relations=doc["relations"],
        interactions=np.array(doc["interactions"], dtype=np.int64).reshape(-1, 2),
        triples=np.array(doc["triples"], dtype=np.int64).reshape(-1, 3),
        inverse=np.array(doc["inverse"], dtype=bool),
        item_entity=np.array(doc["item_entity"], dtype=np.int64),
        split=np.array(doc["split"], dtype=np.int8),
    )
