"""Loss functions for pretraining and finetuning.

All BPR-style terms use the log-sum-exp-stable softplus form, so extreme
margins stay finite. The alignment-and-uniformity (AU) loss follows the
standard definition with Gaussian-kernel uniformity at t=2; it normalizes
rows internally and is therefore scale-invariant.
"""

from __future__ import annotations

import numpy as np


def log_sigmoid(x: np.ndarray) -> np.ndarray:
    """log(sigmoid(x)) computed without overflow for any magnitude."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def alignment_loss(pairs) -> float:
    """Sum of squared distances over interacting (user_row, item_row) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("alignment_loss requires a non-empty batch")
    total = 0.0
    for u, i in pairs:
        diff = np.asarray(u, dtype=np.float64) - np.asarray(i, dtype=np.float64)
        total += float(diff @ diff)
    return total


def bpr_loss(score_pairs) -> float:
    """Pairwise ranking loss: sum of -log sigmoid(s_pos - s_neg)."""
    score_pairs = list(score_pairs)
    if not score_pairs:
        raise ValueError("bpr_loss requires a non-empty batch")
    margins = np.array([p - n for p, n in score_pairs], dtype=np.float64)
    return float(-log_sigmoid(margins).sum())


def bpr_pos_loss(scores_pos) -> float:
    """Positive-only ranking loss: sum of -log sigmoid(s_pos)."""
    scores = np.asarray(list(scores_pos), dtype=np.float64)
    if scores.size == 0:
        raise ValueError("bpr_pos_loss requires a non-empty batch")
    return float(-log_sigmoid(scores).sum())


def _normalize_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, rows / safe, 0.0)


def _uniformity(rows: np.ndarray) -> float:
    """log mean exp(-2 ||x - y||^2) over distinct same-set pairs; 0 if < 2 rows."""
    n = rows.shape[0]
    if n < 2:
        return 0.0
    sq = (rows[:, None, :] - rows[None, :, :]) ** 2
    d2 = sq.sum(axis=2)
    iu = np.triu_indices(n, k=1)
    return float(np.log(np.mean(np.exp(-2.0 * d2[iu]))))


def au_loss(pairs, all_user_rows, all_item_rows, uniformity_weight: float = 1.0) -> float:
    """Alignment-and-uniformity loss on internally L2-normalized rows.

    Alignment is the mean squared distance over positive pairs; uniformity
    is computed per entity set and averaged. Zero rows normalize to zero.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("au_loss requires a non-empty batch")
    users = _normalize_rows(np.array([np.asarray(u, dtype=np.float64) for u, _ in pairs]))
    items = _normalize_rows(np.array([np.asarray(i, dtype=np.float64) for _, i in pairs]))
    align = float(np.mean(((users - items) ** 2).sum(axis=1)))
    u_rows = _normalize_rows(np.asarray(all_user_rows, dtype=np.float64))
    i_rows = _normalize_rows(np.asarray(all_item_rows, dtype=np.float64))
    uniform = 0.5 * (_uniformity(u_rows) + _uniformity(i_rows))
    return align + uniformity_weight * uniform


def joint_loss(rec_loss: float, aux_losses, beta: float, lambda_reg: float, table) -> float:
    """beta-weighted combination of recommendation and auxiliary losses plus L2."""
    if not (0.0 <= beta <= 1.0):
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    reg = float((table.user_emb**2).sum() + (table.item_emb**2).sum())
    return beta * rec_loss + (1.0 - beta) * float(sum(aux_losses)) + lambda_reg * reg
