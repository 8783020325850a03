"""Interaction datasets: splits, negative sampling, synthetic fixtures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .tasks import (
    AttributeTable,
    NodeSide,
    TaskHypergraph,
    build_attribute_hypergraph,
    build_recommendation_hypergraphs,
    build_relation_hypergraph,
)

# Deterministic sub-stream tags for the master seed.
STREAM_INIT = 0
STREAM_SPLIT = 1
STREAM_SHUFFLE = 2
STREAM_NEGATIVES = 3
STREAM_AUX = 4
STREAM_COLD = 5
STREAM_SYNTH = 6
STREAM_HEADS = 7


def rng_for(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream)])


@dataclass
class InteractionDataset:
    """User-item edges with a train/test split plus auxiliary task hypergraphs."""

    num_users: int
    num_items: int
    train_edges: set
    test_edges: set
    auxiliary_tasks: list = field(default_factory=list)

    def __post_init__(self):
        overlap = self.train_edges & self.test_edges
        if overlap:
            raise DataError(f"train/test overlap on {len(overlap)} edges, e.g. {sorted(overlap)[0]}")
        for u, i in self.train_edges | self.test_edges:
            if not (0 <= u < self.num_users and 0 <= i < self.num_items):
                raise DataError(f"edge ({u}, {i}) out of range for "
                                f"{self.num_users} users x {self.num_items} items")
        self._rec_pair = None
        self._train_by_user = None
        self._test_by_user = None

    def rec_pair(self):
        """The transposed pair of recommendation hypergraphs over train edges."""
        if self._rec_pair is None:
            self._rec_pair = build_recommendation_hypergraphs(
                sorted(self.train_edges), self.num_users, self.num_items
            )
        return self._rec_pair

    def rec_pair_with(self, extra_edges):
        """Recommendation pair over train edges plus inference-only edges."""
        edges = sorted(self.train_edges | set(extra_edges))
        return build_recommendation_hypergraphs(edges, self.num_users, self.num_items)

    def train_by_user(self) -> dict:
        if self._train_by_user is None:
            by_user: dict = {}
            for u, i in sorted(self.train_edges):
                by_user.setdefault(u, set()).add(i)
            self._train_by_user = by_user
        return self._train_by_user

    def test_by_user(self) -> dict:
        if self._test_by_user is None:
            by_user: dict = {}
            for u, i in sorted(self.test_edges):
                by_user.setdefault(u, set()).add(i)
            self._test_by_user = by_user
        return self._test_by_user

    def tasks_on(self, side: NodeSide) -> list:
        return [t for t in self.auxiliary_tasks if t.side == side]

    def replace_edges(self, train_edges, test_edges) -> "InteractionDataset":
        return InteractionDataset(
            self.num_users, self.num_items, set(train_edges), set(test_edges), self.auxiliary_tasks
        )


def split_interactions(edges, train_fraction: float, seed: int):
    """Uniform per-edge split; users left without train edges get one back.

    Deterministic under the seed. Returns (train_set, test_set).
    """
    if not (0.0 < train_fraction < 1.0):
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    edges = sorted(set(edges))
    if len(edges) < 2:
        raise DataError("need at least 2 interactions to split")
    rng = rng_for(seed, STREAM_SPLIT)
    order = rng.permutation(len(edges))
    n_train = int(round(train_fraction * len(edges)))
    n_train = min(max(n_train, 1), len(edges) - 1)
    train = {edges[j] for j in order[:n_train]}
    test = {edges[j] for j in order[n_train:]}
    # Keep every user reachable during training: users whose edges all fell
    # into test get their first test edge moved back.
    train_users = {u for u, _ in train}
    for u, i in sorted(test):
        if u not in train_users:
            test.discard((u, i))
            train.add((u, i))
            train_users.add(u)
    return train, test


def sample_negative_items(rng, users, train_by_user, num_items: int) -> np.ndarray:
    """One uniform non-interacted item per entry of `users` (rejection sampling)."""
    out = np.empty(len(users), dtype=np.int64)
    for k, u in enumerate(users):
        seen = train_by_user.get(int(u), ())
        if len(seen) >= num_items:
            raise DataError(f"user {u} interacted with every item; cannot sample a negative")
        j = int(rng.integers(num_items))
        while j in seen:
            j = int(rng.integers(num_items))
        out[k] = j
    return out


def task_positive_pairs(task: TaskHypergraph) -> np.ndarray:
    """(node, hyperedge) incidence pairs eligible for ranking training.

    Nodes incident to every hyperedge are dropped: they admit no negative.
    """
    pairs = task.graph.memberships()
    m = task.graph.num_hyperedges
    if m < 2:
        return pairs[:0]
    eligible = task.graph.node_degrees[pairs[:, 0]] < m
    return pairs[eligible]


def sample_negative_hyperedges(rng, task: TaskHypergraph, nodes) -> np.ndarray:
    """One uniform non-incident hyperedge per node entry."""
    graph = task.graph
    m = graph.num_hyperedges
    csr = graph.incidence
    out = np.empty(len(nodes), dtype=np.int64)
    for k, v in enumerate(nodes):
        v = int(v)
        incident = csr.indices[csr.indptr[v] : csr.indptr[v + 1]]
        e = int(rng.integers(m))
        while e in incident:
            e = int(rng.integers(m))
        out[k] = e
    return out


def synthetic_records(
    num_users: int,
    num_items: int,
    num_blocks: int,
    noise: float,
    seed: int,
    interactions_per_user: int = 2,
    relation_partners: int = 2,
):
    """Raw records of the planted block model: edges, attributes, relations.

    Users and items are partitioned into aligned co-preference blocks; each
    user draws `interactions_per_user` items, within their own block except
    with probability `noise`. The attribute records label every item with
    its block; the relation records link each item to a few block partners.
    """
    if num_users % num_blocks or num_items % num_blocks:
        raise ValueError("num_blocks must divide both num_users and num_items")
    if not (0.0 <= noise <= 1.0):
        raise ValueError(f"noise must be in [0, 1], got {noise}")
    rng = rng_for(seed, STREAM_SYNTH)
    users_per_block = num_users // num_blocks
    items_per_block = num_items // num_blocks
    user_block = np.arange(num_users) // users_per_block
    item_block = np.arange(num_items) // items_per_block
    edges = set()
    for u in range(num_users):
        b = user_block[u]
        base = b * items_per_block
        for _ in range(interactions_per_user):
            if num_blocks > 1 and rng.random() < noise:
                i = int(rng.integers(num_items))
                while item_block[i] == b:
                    i = int(rng.integers(num_items))
            else:
                i = base + int(rng.integers(items_per_block))
            edges.add((u, i))
    attr_records = [(i, f"block_{item_block[i]}") for i in range(num_items)]
    relations = []
    for i in range(num_items):
        b = item_block[i]
        pool = [j for j in range(b * items_per_block, (b + 1) * items_per_block) if j != i]
        count = min(relation_partners, len(pool))
        partners = rng.choice(len(pool), size=count, replace=False) if count else []
        relations.append((i, {pool[int(p)] for p in partners}))
    return edges, attr_records, relations


def generate_synthetic_dataset(
    num_users: int,
    num_items: int,
    num_blocks: int,
    noise: float,
    seed: int,
    interactions_per_user: int = 2,
    train_fraction: float = 0.8,
    relation_partners: int = 2,
) -> InteractionDataset:
    """Planted block-model dataset with two item-side auxiliary tasks."""
    edges, attr_records, relations = synthetic_records(
        num_users, num_items, num_blocks, noise, seed, interactions_per_user, relation_partners
    )
    train, test = split_interactions(edges, train_fraction, seed)
    attr_task = build_attribute_hypergraph(
        "item_block", NodeSide.ITEMS, AttributeTable(attr_records), bins=2, num_nodes=num_items
    )
    rel_task, _ = build_relation_hypergraph(
        "item_partners", NodeSide.ITEMS, relations, num_items
    )
    return InteractionDataset(
        num_users=num_users,
        num_items=num_items,
        train_edges=train,
        test_edges=test,
        auxiliary_tasks=[attr_task, rel_task],
    )
