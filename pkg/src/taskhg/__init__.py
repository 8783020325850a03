"""taskhg: multitask pretraining for recommendation on task hypergraphs."""

from .config import LossKind, TAVariant, TrainConfig
from .data import (
    InteractionDataset,
    generate_synthetic_dataset,
    split_interactions,
)
from .errors import (
    CheckpointError,
    CheckpointFormatError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConstructionError,
    DataError,
    DivergenceError,
    TaskHGError,
)
from .evaluate import EvalReport, MetricRow, evaluate, ndcg_at_k, recall_at_k
from .gradients import GradientTape, PretrainBatch, pretrain_loss_and_grad
from .hypergraph import (
    Hypergraph,
    aggregate_hyperedges_to_nodes,
    aggregate_nodes_to_hyperedges,
    build_hypergraph,
    hypergraph_convolve,
)
from .io import (
    Checkpoint,
    DatasetStats,
    TaskManifest,
    emit_report,
    format_report,
    load_checkpoint,
    load_dataset,
    parse_manifest,
    save_checkpoint,
    write_synthetic_dataset,
)
from .losses import alignment_loss, au_loss, bpr_loss, bpr_pos_loss, joint_loss
from .model import (
    EmbeddingTable,
    TAConfig,
    TaskActivations,
    encode_auxiliary_task,
    forward_pretrain,
    init_embeddings,
    score_node_hyperedge,
    score_user_item,
    ta_attention,
    ta_forward,
    ta_fuse,
    ta_hyperedge_init,
    ta_node_update,
)
from .optim import AdamState, adam_step
from .protocols import AblationReport, cold_start_eval, run_ablation
from .tasks import (
    AttributeTable,
    NodeSide,
    TaskHypergraph,
    TaskKind,
    build_attribute_hypergraph,
    build_recommendation_hypergraphs,
    build_relation_hypergraph,
    quantize_continuous,
)
from .train import FinetuneResult, PretrainResult, TrainingLog, finetune, pretrain

__version__ = "0.1.0"
