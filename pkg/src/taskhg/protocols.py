"""Experiment protocols: ablation grids and cold-start evaluation."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .config import LossKind, TAVariant, TrainConfig
from .data import STREAM_COLD, InteractionDataset, rng_for
from .errors import DataError
from .evaluate import EvalReport, MetricRow, evaluate
from .train import finetune, pretrain

TA_VARIANT_GRID = (TAVariant.FULL, TAVariant.NO_TA, TAVariant.SUM, TAVariant.CONCAT)

# Same loss for both stages, then ranking-loss pretraining, then
# ranking-loss finetuning: 4 + 3 + 3 combinations.
LOSS_GRID = (
    (LossKind.BPR, LossKind.BPR),
    (LossKind.BPR_POS, LossKind.BPR_POS),
    (LossKind.AU, LossKind.AU),
    (LossKind.ALIGNMENT, LossKind.ALIGNMENT),
    (LossKind.BPR, LossKind.BPR_POS),
    (LossKind.BPR, LossKind.AU),
    (LossKind.BPR, LossKind.ALIGNMENT),
    (LossKind.BPR_POS, LossKind.BPR),
    (LossKind.AU, LossKind.BPR),
    (LossKind.ALIGNMENT, LossKind.BPR),
)


@dataclass
class AblationReport:
    ta_variants: EvalReport
    loss_combinations: EvalReport


def _run_cell(dataset: InteractionDataset, config: TrainConfig, label: str) -> MetricRow:
    pre = pretrain(dataset, config)
    fine = finetune(pre.table, dataset, config)
    report = evaluate(fine.table, dataset, config.eval_ks)
    row = report.rows[0]
    return MetricRow(label=label, recall=row.recall, ndcg=row.ndcg, num_users=row.num_users)


def run_ablation(dataset: InteractionDataset, config: TrainConfig) -> AblationReport:
    """Run the TA-variant grid and the loss-combination grid, same seed per cell."""
    config.validate()
    ta_rows = [
        _run_cell(dataset, replace(config, ta_variant=variant), f"ta={variant.value}")
        for variant in TA_VARIANT_GRID
    ]
    loss_rows = [
        _run_cell(
            dataset,
            replace(config, pretrain_loss=p, finetune_loss=f),
            f"{p.value}+{f.value}",
        )
        for p, f in LOSS_GRID
    ]
    meta = dict(
        seed=config.seed,
        epochs_pretrain=config.epochs_pretrain,
        epochs_finetune=config.epochs_finetune,
    )
    return AblationReport(
        ta_variants=EvalReport(ks=tuple(config.eval_ks), rows=ta_rows, **meta),
        loss_combinations=EvalReport(ks=tuple(config.eval_ks), rows=loss_rows, **meta),
    )


def cold_start_eval(
    dataset: InteractionDataset, config: TrainConfig, ratio: float
) -> EvalReport:
    """Inductive-user protocol: withhold a ratio of users' edges from training.

    The selected users' train edges are removed from both pretraining and
    finetuning; the users keep their auxiliary-task memberships. At
    inference only, the withheld edges are fed to the downstream encoder,
    and metrics are reported over the cold users, comparing the full
    configuration against one pretrained without auxiliary tasks.
    """
    config.validate()
    if not (0.0 < ratio < 1.0):
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    rng = rng_for(config.seed, STREAM_COLD)
    n_cold = int(round(ratio * dataset.num_users))
    if n_cold < 1 or n_cold >= dataset.num_users:
        raise DataError(f"ratio {ratio} leaves no cold or no warm users")
    cold_users = set(int(u) for u in rng.choice(dataset.num_users, n_cold, replace=False))
    withheld = {(u, i) for (u, i) in dataset.train_edges if u in cold_users}
    reduced_train = dataset.train_edges - withheld
    if not reduced_train:
        raise DataError("cold-start removal left no training interactions")
    rows = []
    for label, aux_tasks in (("full", dataset.auxiliary_tasks), ("no_auxiliary", [])):
        train_ds = InteractionDataset(
            dataset.num_users,
            dataset.num_items,
            set(reduced_train),
            set(dataset.test_edges),
            list(aux_tasks),
        )
        pre = pretrain(train_ds, config)
        fine = finetune(pre.table, train_ds, config)
        report = evaluate(
            fine.table,
            train_ds,
            config.eval_ks,
            users=cold_users,
            extra_inference_edges=sorted(withheld),
        )
        row = report.rows[0]
        rows.append(
            MetricRow(label=label, recall=row.recall, ndcg=row.ndcg, num_users=row.num_users)
        )
    return EvalReport(
        ks=tuple(config.eval_ks),
        rows=rows,
        seed=config.seed,
        epochs_pretrain=config.epochs_pretrain,
        epochs_finetune=config.epochs_finetune,
        cold_start_ratio=ratio,
    )
