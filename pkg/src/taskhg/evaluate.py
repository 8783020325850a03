"""Top-K ranking evaluation: Recall@K and NDCG@K with deterministic ties.

Scores come from the downstream encoder: one hypergraph convolution over
the recommendation hypergraphs, then user-item inner products. Items a
user interacted with during training are masked out of the ranking; ties
break by ascending item index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import InteractionDataset
from .hypergraph import hypergraph_convolve
from .model import EmbeddingTable


def recall_at_k(ranked_items, test_items, k: int) -> float:
    """Fraction of a user's test items that appear in their top-k."""
    test_items = set(test_items)
    if not test_items:
        raise ValueError("recall_at_k needs at least one test item")
    hits = sum(1 for i in ranked_items[:k] if i in test_items)
    return hits / len(test_items)


def ndcg_at_k(ranked_items, test_items, k: int) -> float:
    """Binary-relevance NDCG; ideal gain uses min(k, #test) positions."""
    test_items = set(test_items)
    if not test_items:
        raise ValueError("ndcg_at_k needs at least one test item")
    dcg = 0.0
    for pos, item in enumerate(ranked_items[:k], start=1):
        if item in test_items:
            dcg += 1.0 / math.log2(pos + 1)
    ideal = sum(1.0 / math.log2(p + 1) for p in range(1, min(k, len(test_items)) + 1))
    return dcg / ideal


@dataclass
class MetricRow:
    label: str
    recall: dict
    ndcg: dict
    num_users: int

    def __post_init__(self):
        for table in (self.recall, self.ndcg):
            for k, v in table.items():
                if not (0.0 <= v <= 1.0):
                    raise ValueError(f"metric out of [0, 1] at K={k}: {v}")


@dataclass
class EvalReport:
    ks: tuple
    rows: list
    seed: int = 0
    epochs_pretrain: int = 0
    epochs_finetune: int = 0
    cold_start_ratio: float | None = None
    extras: dict = field(default_factory=dict)

    def row(self, label: str) -> MetricRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)


def rank_items(score_row: np.ndarray) -> np.ndarray:
    """Full descending ranking with ties broken by ascending item index."""
    return np.lexsort((np.arange(len(score_row)), -score_row))


def evaluate_scores(scores: np.ndarray, masked_by_user: dict, test_by_user: dict, ks, users):
    """Mean Recall@K / NDCG@K over `users` from a (num_users, num_items) score matrix."""
    ks = tuple(ks)
    if not ks:
        raise ValueError("ks must name at least one cutoff")
    kmax = max(ks)
    recall = {k: 0.0 for k in ks}
    ndcg = {k: 0.0 for k in ks}
    count = 0
    for u in users:
        test_items = test_by_user.get(u)
        if not test_items:
            continue
        row = scores[u].copy()
        for i in masked_by_user.get(u, ()):
            row[i] = -np.inf
        top = rank_items(row)[:kmax]
        for k in ks:
            recall[k] += recall_at_k(top, test_items, k)
            ndcg[k] += ndcg_at_k(top, test_items, k)
        count += 1
    if count:
        for k in ks:
            recall[k] /= count
            ndcg[k] /= count
    return recall, ndcg, count


def encode_for_inference(table: EmbeddingTable, dataset: InteractionDataset, extra_edges=None):
    """Downstream encoder: one convolution over the recommendation pair.

    extra_edges are inference-only interactions (the cold-start protocol
    feeds withheld edges back here without ever training on them).
    """
    if extra_edges:
        rec_user_task, rec_item_task = dataset.rec_pair_with(extra_edges)
    else:
        rec_user_task, rec_item_task = dataset.rec_pair()
    user_out = hypergraph_convolve(rec_user_task.graph, table.user_emb)
    item_out = hypergraph_convolve(rec_item_task.graph, table.item_emb)
    return user_out, item_out


def evaluate(
    table: EmbeddingTable,
    dataset: InteractionDataset,
    ks,
    users=None,
    extra_inference_edges=None,
    label: str = "overall",
    seed: int = 0,
    epochs_pretrain: int = 0,
    epochs_finetune: int = 0,
) -> EvalReport:
    """Rank all items per user and report mean Recall@K / NDCG@K.

    Only users with at least one test item and at least one interaction
    visible at inference are evaluated. Known interactions (train plus any
    inference-only edges) are masked from the candidate ranking.
    """
    if not dataset.test_edges:
        raise ValueError("evaluate requires a non-empty test set")
    user_out, item_out = encode_for_inference(table, dataset, extra_inference_edges)
    scores = user_out @ item_out.T
    masked = {u: set(items) for u, items in dataset.train_by_user().items()}
    known_users = set(masked)
    if extra_inference_edges:
        for u, i in extra_inference_edges:
            masked.setdefault(u, set()).add(i)
            known_users.add(u)
    test_by_user = dataset.test_by_user()
    if users is None:
        users = sorted(u for u in test_by_user if u in known_users)
    else:
        users = sorted(set(users) & set(test_by_user) & known_users)
    recall, ndcg, count = evaluate_scores(scores, masked, test_by_user, ks, users)
    row = MetricRow(label=label, recall=recall, ndcg=ndcg, num_users=count)
    return EvalReport(
        ks=tuple(ks),
        rows=[row],
        seed=seed,
        epochs_pretrain=epochs_pretrain,
        epochs_finetune=epochs_finetune,
    )
