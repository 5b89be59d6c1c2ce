"""
Training loop: PK batches -> combined loss -> backward -> Adam at the scheduled rate.

Randomness for batch b of epoch e comes from SeedSequence([seed, e, b]), so a run resumed
from the checkpoint of epoch e continues exactly like the uninterrupted run.
"""
import logging
import os
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from core.exceptions import ConfigError, DataError, NumericalError
from core.optim import adam_step
from core.tensor import AutodiffTape, backward
from models.dataset import AugmentFlags, Batch, BatchSpec
from models.training import LossConfig, LossReport, ScheduleConfig
from services.backbone_service import VideoReIDModel
from services.dataset_service import TrackletDataset
from services.loss_service import combined_loss
from services.sampling_service import pk_batch
from utils.data_handler import CheckpointHandler, ReportHandler

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "ce", "triplet", "total", "acc", "lr"]
EPOCH_KEY = "meta.epoch"
LATEST = "latest.ckpt"


def lr_at(epoch: int, schedule: ScheduleConfig) -> float:
    """base_lr * decay_factor ** floor(epoch / decay_every)"""
    if epoch < 0:
        raise ConfigError(f"epoch must be non-negative, got {epoch}")
    return schedule.base_lr * schedule.decay_factor ** (epoch // schedule.decay_every)


def batch_rng(seed: int, epoch: int, batch: int):
    """Generator and printable seed for one batch"""
    sequence = np.random.SeedSequence([seed, epoch, batch])
    return np.random.default_rng(sequence), int(sequence.generate_state(1)[0])


def model_state(model: VideoReIDModel, epoch: int) -> Dict[str, np.ndarray]:
    """Parameters, Adam moments, step counts and the number of completed epochs"""
    state: Dict[str, np.ndarray] = {}
    for name, param in model.parameters().items():
        state[name] = param.value.data
        state[f"{name}.adam_m"] = param.adam_m.data
        state[f"{name}.adam_v"] = param.adam_v.data
        state[f"{name}.step_count"] = np.asarray(param.step_count, dtype=np.float64)
    state[EPOCH_KEY] = np.asarray(epoch, dtype=np.float64)
    return state


def restore_state(model: VideoReIDModel, state: Dict[str, np.ndarray]) -> int:
    """Load a full training state into ``model``; returns the completed epoch count"""
    model.load_state(state)
    for name, param in model.parameters().items():
        if f"{name}.adam_m" in state:
            param.adam_m.data[...] = state[f"{name}.adam_m"]
            param.adam_v.data[...] = state[f"{name}.adam_v"]
            param.step_count = int(state[f"{name}.step_count"])
        param.zero_grad()
    return int(state.get(EPOCH_KEY, 0))


class Trainer:
    """Runs epochs of PK batches and writes a checkpoint and a log row after each"""

    def __init__(self, model: VideoReIDModel, dataset: TrackletDataset, batch_spec: BatchSpec,
                 schedule: ScheduleConfig, loss_config: LossConfig, seed: int = 0,
                 augment_flags: Optional[AugmentFlags] = None, checkpoint_dir: Optional[str] = None,
                 checkpoint_handler: Optional[CheckpointHandler] = None,
                 report_handler: Optional[ReportHandler] = None, progress: bool = True):
        self.model = model
        self.dataset = dataset
        self.batch_spec = batch_spec
        self.schedule = schedule
        self.loss_config = loss_config
        self.seed = seed
        self.augment_flags = augment_flags
        self.checkpoint_dir = checkpoint_dir
        self.checkpoint_handler = checkpoint_handler or CheckpointHandler()
        self.report_handler = report_handler or ReportHandler()
        self.progress = progress
        self.start_epoch = 0
        self.history: List[Dict[str, float]] = []
        self.batch_losses: List[float] = []

    def sample_batch(self, epoch: int, index: int) -> Batch:
        rng, seed = batch_rng(self.seed, epoch, index)
        return pk_batch(self.dataset, self.batch_spec, rng, self.augment_flags, seed=seed)

    def train_step(self, batch: Batch, lr: float) -> LossReport:
        """One forward/backward pass and parameter update (skipped when lr is 0)"""
        params = list(self.model.parameters().values())
        try:
            with AutodiffTape() as tape:
                embeddings, logits = self.model.encode_batch(batch.clips)
                total, report = combined_loss(logits, embeddings, batch.labels, self.loss_config)
                backward(total, tape)
        except NumericalError as exc:
            logger.error("Non-finite values in batch with seed %d", batch.seed)
            raise NumericalError(str(exc), batch_seed=batch.seed) from exc

        if lr > 0:
            adam_step(params, lr, self.schedule.adam_beta1, self.schedule.adam_beta2, self.schedule.adam_eps)
        else:
            for param in params:
                param.zero_grad()
        return report

    def train_epoch(self, epoch: int) -> LossReport:
        lr = lr_at(epoch, self.schedule)
        reports = []
        batches = range(self.schedule.batches_per_epoch)
        for index in tqdm(batches, desc=f"epoch {epoch}", disable=not self.progress, leave=False):
            report = self.train_step(self.sample_batch(epoch, index), lr)
            reports.append(report)
            self.batch_losses.append(report.total)
        summary = LossReport.mean(reports)
        self.history.append(summary.to_row(epoch, lr))
        logger.info("epoch %d ce=%.4f triplet=%.4f total=%.4f acc=%.3f lr=%.2e",
                    epoch, summary.ce_loss, summary.triplet_loss, summary.total,
                    summary.batch_accuracy, lr)
        return summary

    def train(self, epochs: Optional[int] = None) -> pd.DataFrame:
        """Train from ``start_epoch`` up to ``epochs`` (default: the schedule's total)"""
        end = self.schedule.total_epochs if epochs is None else epochs
        for epoch in range(self.start_epoch, end):
            self.train_epoch(epoch)
            self.start_epoch = epoch + 1
            self.save_checkpoint()
        return self.log_frame()

    def log_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=LOG_COLUMNS)

    def save_checkpoint(self) -> Optional[str]:
        if not self.checkpoint_dir:
            return None
        state = model_state(self.model, self.start_epoch)
        path = os.path.join(self.checkpoint_dir, f"epoch_{self.start_epoch:03d}.ckpt")
        self.checkpoint_handler.save_data(state, path)
        self.checkpoint_handler.save_data(state, os.path.join(self.checkpoint_dir, LATEST))
        log = self.log_frame()
        log_path = os.path.join(self.checkpoint_dir, "train_log.tsv")
        if self.start_epoch > len(self.history) and os.path.exists(log_path):
            log = pd.concat([self.report_handler.load_data(log_path), log], ignore_index=True)
            log = log.drop_duplicates(subset="epoch", keep="last")
        self.report_handler.save_data(log, log_path)
        return path

    def resume(self, path: Optional[str] = None) -> int:
        """Load a checkpoint (default: latest in checkpoint_dir); returns the next epoch"""
        path = path or (os.path.join(self.checkpoint_dir, LATEST) if self.checkpoint_dir else None)
        if not path or not os.path.exists(path):
            raise DataError(f"No checkpoint to resume from at {path}")
        self.start_epoch = restore_state(self.model, self.checkpoint_handler.load_data(path))
        logger.info("Resumed from %s at epoch %d", path, self.start_epoch)
        return self.start_epoch
