"""Pretraining and finetuning loops.

Pretraining jointly optimizes the recommendation loss (through the
transitional attention stack) and one ranking loss per auxiliary task,
all against the shared embedding table. Finetuning continues with a
single weight-free convolution on the recommendation hypergraphs only.
Both loops are deterministic for a fixed seed: shuffling, negative
sampling, and initialization each draw from their own seeded stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import LossKind, TAVariant, TrainConfig
from .data import (
    STREAM_AUX,
    STREAM_HEADS,
    STREAM_NEGATIVES,
    STREAM_SHUFFLE,
    InteractionDataset,
    rng_for,
    sample_negative_hyperedges,
    sample_negative_items,
    task_positive_pairs,
)
from .errors import DivergenceError
from .gradients import PretrainBatch, finetune_loss_and_grad, pretrain_loss_and_grad
from .model import EmbeddingTable, init_embeddings
from .optim import AdamState
from .tasks import NodeSide, TaskKind


@dataclass
class AttentionAudit:
    """Running bounds over every attention vector recorded during training."""

    vectors_seen: int = 0
    min_weight: float = math.inf
    max_sum_deviation: float = 0.0

    def update(self, arrays):
        for arr in arrays:
            if arr.size == 0:
                continue
            self.vectors_seen += arr.shape[0]
            self.min_weight = min(self.min_weight, float(arr.min()))
            dev = float(np.abs(arr.sum(axis=1) - 1.0).max())
            self.max_sum_deviation = max(self.max_sum_deviation, dev)


@dataclass
class TrainingLog:
    epoch_losses: list = field(default_factory=list)
    attention: AttentionAudit = field(default_factory=AttentionAudit)
    steps: int = 0


@dataclass
class PretrainResult:
    table: EmbeddingTable
    log: TrainingLog
    extra_params: dict = field(default_factory=dict)


@dataclass
class FinetuneResult:
    table: EmbeddingTable
    log: TrainingLog


def _init_extra_params(dataset: InteractionDataset, config: TrainConfig) -> dict:
    """Extra trainable blocks used only by ablation variants."""
    rng = rng_for(config.seed, STREAM_HEADS)
    extra: dict = {}
    d = config.dim
    if config.ta_variant == TAVariant.CONCAT:
        n_item_tasks = len(dataset.tasks_on(NodeSide.ITEMS))
        n_user_tasks = len(dataset.tasks_on(NodeSide.USERS))
        if n_item_tasks:
            fan_in = n_item_tasks * d
            extra["ta_concat_user"] = rng.normal(0.0, 1.0 / math.sqrt(fan_in), (fan_in, d))
        if n_user_tasks:
            fan_in = n_user_tasks * d
            extra["ta_concat_item"] = rng.normal(0.0, 1.0 / math.sqrt(fan_in), (fan_in, d))
    if not config.unified_attributes:
        for task in dataset.auxiliary_tasks:
            if task.kind == TaskKind.ATTRIBUTE_PREDICTION:
                n_values = task.graph.num_hyperedges
                extra[f"attr_head:{task.task_id}"] = rng.normal(
                    0.0, 1.0 / math.sqrt(d), (d, n_values)
                )
    return extra


def _chunk_bounds(total: int, steps: int, step: int):
    lo = (step * total) // steps
    hi = ((step + 1) * total) // steps
    return lo, hi


def pretrain(
    dataset: InteractionDataset, config: TrainConfig, table: EmbeddingTable | None = None
) -> PretrainResult:
    """Joint multitask pretraining; returns the trained embedding table."""
    config.validate()
    rec_user_task, rec_item_task = dataset.rec_pair()
    if table is None:
        table = init_embeddings(dataset.num_users, dataset.num_items, config.dim, config.seed)
    else:
        table = table.copy()
    extra = _init_extra_params(dataset, config)
    log = TrainingLog()
    if config.epochs_pretrain == 0:
        return PretrainResult(table, log, extra)

    shuffle_rng = rng_for(config.seed, STREAM_SHUFFLE)
    neg_rng = rng_for(config.seed, STREAM_NEGATIVES)
    aux_rng = rng_for(config.seed, STREAM_AUX)
    params = {"user": table.user_emb, "item": table.item_emb, **extra}
    adam = AdamState.for_params(
        params, config.lr, config.adam_beta1, config.adam_beta2, config.adam_epsilon
    )
    pos_pairs = np.array(sorted(dataset.train_edges), dtype=np.int64)
    train_by_user = dataset.train_by_user()
    aux_tasks = dataset.auxiliary_tasks
    ce_attr = {
        t.task_id
        for t in aux_tasks
        if not config.unified_attributes and t.kind == TaskKind.ATTRIBUTE_PREDICTION
    }
    aux_pairs = {}
    for task in aux_tasks:
        if task.task_id in ce_attr:
            aux_pairs[task.task_id] = task.graph.memberships()
        else:
            aux_pairs[task.task_id] = task_positive_pairs(task)
    need_rec_negatives = config.pretrain_loss == LossKind.BPR
    n_pos = len(pos_pairs)
    steps = max(1, math.ceil(n_pos / config.batch_size))

    for epoch in range(config.epochs_pretrain):
        perm = shuffle_rng.permutation(n_pos)
        aux_perm = {tid: aux_rng.permutation(len(p)) for tid, p in aux_pairs.items()}
        epoch_loss = 0.0
        for step in range(steps):
            idx = perm[step * config.batch_size : (step + 1) * config.batch_size]
            users = pos_pairs[idx, 0]
            items = pos_pairs[idx, 1]
            negs = None
            if need_rec_negatives:
                k = config.negatives_per_positive
                users = np.repeat(users, k)
                items = np.repeat(items, k)
                negs = sample_negative_items(neg_rng, users, train_by_user, dataset.num_items)
            batch = PretrainBatch(users, items, negs)
            for task in aux_tasks:
                tid = task.task_id
                pairs = aux_pairs[tid]
                lo, hi = _chunk_bounds(len(pairs), steps, step)
                chunk = pairs[aux_perm[tid][lo:hi]]
                if tid in ce_attr:
                    batch.attr_ce[tid] = (chunk[:, 0], chunk[:, 1])
                elif len(chunk):
                    neg_edges = sample_negative_hyperedges(aux_rng, task, chunk[:, 0])
                    batch.aux_bpr[tid] = (chunk[:, 0], chunk[:, 1], neg_edges)
            loss, tape, acts = pretrain_loss_and_grad(
                table, rec_user_task, rec_item_task, aux_tasks, config, batch, extra
            )
            if not (math.isfinite(loss) and tape.allfinite()):
                raise DivergenceError(
                    f"non-finite loss or gradient at pretrain epoch {epoch}, batch {step}"
                )
            log.attention.update(acts.attention_arrays())
            adam.apply(
                {"user": tape.grad_user, "item": tape.grad_item, **tape.extra}, params
            )
            epoch_loss += loss
            log.steps += 1
        log.epoch_losses.append(epoch_loss / steps)
    return PretrainResult(table, log, extra)


def finetune(
    table: EmbeddingTable, dataset: InteractionDataset, config: TrainConfig
) -> FinetuneResult:
    """Continue training through one recommendation-hypergraph convolution."""
    config.validate()
    if table.dim != config.dim:
        raise ValueError(f"table dim {table.dim} does not match config dim {config.dim}")
    table = table.copy()
    log = TrainingLog()
    if config.epochs_finetune == 0:
        return FinetuneResult(table, log)
    rec_user_task, rec_item_task = dataset.rec_pair()
    shuffle_rng = rng_for(config.seed, STREAM_SHUFFLE + 100)
    neg_rng = rng_for(config.seed, STREAM_NEGATIVES + 100)
    params = {"user": table.user_emb, "item": table.item_emb}
    adam = AdamState.for_params(
        params, config.lr, config.adam_beta1, config.adam_beta2, config.adam_epsilon
    )
    pos_pairs = np.array(sorted(dataset.train_edges), dtype=np.int64)
    train_by_user = dataset.train_by_user()
    need_negatives = config.finetune_loss == LossKind.BPR
    n_pos = len(pos_pairs)
    steps = max(1, math.ceil(n_pos / config.batch_size))
    for epoch in range(config.epochs_finetune):
        perm = shuffle_rng.permutation(n_pos)
        epoch_loss = 0.0
        for step in range(steps):
            idx = perm[step * config.batch_size : (step + 1) * config.batch_size]
            users = pos_pairs[idx, 0]
            items = pos_pairs[idx, 1]
            negs = None
            if need_negatives:
                k = config.negatives_per_positive
                users = np.repeat(users, k)
                items = np.repeat(items, k)
                negs = sample_negative_items(neg_rng, users, train_by_user, dataset.num_items)
            loss, tape, _ = finetune_loss_and_grad(
                table, rec_user_task, rec_item_task, config, users, items, negs
            )
            if not (math.isfinite(loss) and tape.allfinite()):
                raise DivergenceError(
                    f"non-finite loss or gradient at finetune epoch {epoch}, batch {step}"
                )
            adam.apply({"user": tape.grad_user, "item": tape.grad_item}, params)
            epoch_loss += loss
            log.steps += 1
        log.epoch_losses.append(epoch_loss / steps)
    return FinetuneResult(table, log)
