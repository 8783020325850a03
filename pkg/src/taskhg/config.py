"""Training configuration: every hyperparameter left open by the method."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from enum import Enum


class LossKind(Enum):
    ALIGNMENT = "align"
    BPR = "bpr"
    BPR_POS = "bpr_pos"
    AU = "au"


class TAVariant(Enum):
    FULL = "full"
    NO_TA = "no_ta"
    SUM = "sum"
    CONCAT = "concat"


@dataclass
class TrainConfig:
    dim: int = 64
    gamma: float = 1.0
    beta: float = 0.5
    lambda_reg: float = 1e-4
    lr: float = 0.01
    epochs_pretrain: int = 50
    epochs_finetune: int = 50
    batch_size: int = 1024
    negatives_per_positive: int = 1
    seed: int = 0
    pretrain_loss: LossKind = LossKind.ALIGNMENT
    finetune_loss: LossKind = LossKind.BPR
    ta_layers: int = 1
    aux_encoder_layers: int = 1
    eval_ks: tuple = (10, 20)
    quantization_bins: int = 5
    ta_variant: TAVariant = TAVariant.FULL
    unified_attributes: bool = True
    uniformity_weight: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def validate(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if not (self.gamma >= 0.0 and self.gamma == self.gamma):
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")
        for name in ("epochs_pretrain", "epochs_finetune"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in (
            "batch_size",
            "negatives_per_positive",
            "ta_layers",
            "aux_encoder_layers",
            "quantization_bins",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        ks = tuple(self.eval_ks)
        if not ks:
            raise ValueError("eval_ks must not be empty")
        if list(ks) != sorted(ks) or any(k < 1 for k in ks):
            raise ValueError("eval_ks must be positive and sorted ascending")
        return self

    def fingerprint(self) -> str:
        """Stable hash of the full configuration, stored in checkpoints."""
        payload = {}
        for key, value in asdict(self).items():
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            payload[key] = value
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()
