import math
from dataclasses import dataclass
from typing import Dict, List

from core.exceptions import ConfigError


@dataclass
class LossReport:
    """Losses and accuracy of one batch or the mean over an epoch"""
    ce_loss: float
    triplet_loss: float
    total: float
    batch_accuracy: float

    def __post_init__(self):
        values = (self.ce_loss, self.triplet_loss, self.total, self.batch_accuracy)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"LossReport values must be finite: {values}")

    @classmethod
    def mean(cls, reports: List['LossReport']) -> 'LossReport':
        n = len(reports)
        return cls(ce_loss=sum(r.ce_loss for r in reports) / n,
                   triplet_loss=sum(r.triplet_loss for r in reports) / n,
                   total=sum(r.total for r in reports) / n,
                   batch_accuracy=sum(r.batch_accuracy for r in reports) / n)

    def to_row(self, epoch: int, lr: float) -> Dict[str, float]:
        return {"epoch": epoch, "ce": self.ce_loss, "triplet": self.triplet_loss,
                "total": self.total, "acc": self.batch_accuracy, "lr": lr}


@dataclass
class ScheduleConfig:
    """Step-decay learning-rate schedule plus Adam constants"""
    base_lr: float = 0.0003
    decay_factor: float = 0.1
    decay_every: int = 7
    total_epochs: int = 40
    batches_per_epoch: int = 8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.base_lr < 0:
            raise ConfigError(f"base_lr must be non-negative, got {self.base_lr}")
        if not 0 < self.decay_factor < 1:
            raise ConfigError(f"decay_factor must lie in (0, 1), got {self.decay_factor}")
        if self.decay_every < 1:
            raise ConfigError(f"decay_every must be at least 1, got {self.decay_every}")
        if self.total_epochs < 0 or self.batches_per_epoch < 1:
            raise ConfigError("total_epochs must be >= 0 and batches_per_epoch >= 1")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ConfigError("Adam betas must lie in [0, 1) and eps must be positive")

    @classmethod
    def full_scale(cls) -> 'ScheduleConfig':
        """400 epochs with a tenfold decay every 70"""
        return cls(decay_every=70, total_epochs=400)


@dataclass
class LossConfig:
    """Triplet margin and the weights of the two loss terms"""
    triplet_margin: float = 0.3
    ce_weight: float = 1.0
    triplet_weight: float = 1.0

    def __post_init__(self):
        if self.triplet_margin < 0 or self.ce_weight < 0 or self.triplet_weight < 0:
            raise ConfigError("Loss margin and weights must be non-negative")
