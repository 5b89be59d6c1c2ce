import logging
import os
from typing import Dict, Optional

from config.settings import ConfigManager, RunConfig
from core.base_classes import BaseCommand
from core.exceptions import ConfigError
from core.tensor import resolve_dtype
from services.ablation_service import AblationService
from services.backbone_service import ComplexityCalculator, VideoReIDModel
from services.dataset_service import TrackletDataset
from services.eval_service import EvaluationService
from services.training_service import LATEST, Trainer
from utils.console import render_key_values, render_table
from utils.data_handler import CheckpointHandler, LsttTensorHandler, ReportHandler

logger = logging.getLogger(__name__)


def open_dataset(config: RunConfig, tensor_handler: LsttTensorHandler) -> TrackletDataset:
    ConfigManager.validate_paths(config.dataset_root)
    return TrackletDataset(config.dataset_root, tensor_handler, resolve_dtype(config.precision))


def model_from_checkpoint(config_manager: ConfigManager, path: str, checkpoint_handler: CheckpointHandler,
                          config: Optional[RunConfig] = None) -> VideoReIDModel:
    """Build a model sized by the checkpoint's classifier and load its parameters"""
    if not os.path.isfile(path):
        raise ConfigError(f"Checkpoint not found: {path}")
    state = checkpoint_handler.load_data(path)
    if "classifier.weight" not in state:
        raise ConfigError(f"{path} holds no classifier weights")
    num_identities = int(state["classifier.weight"].shape[1])
    config = config or config_manager.get_run_config()
    model = VideoReIDModel(config_manager.backbone_config(num_identities, config), seed=config.seed)
    model.load_state(state)
    return model


def train_model(config_manager: ConfigManager, config: RunConfig, dataset: TrackletDataset,
                checkpoint_handler: CheckpointHandler, report_handler: ReportHandler,
                resume: bool = False) -> Trainer:
    model = VideoReIDModel(config_manager.backbone_config(dataset.num_classes, config), seed=config.seed)
    calculator = ComplexityCalculator(model.config)
    logger.info("Model has %d parameters, %d MACs per clip", model.parameter_count(),
                calculator.calculate(frames=config.frames_per_clip).mac_count)
    trainer = Trainer(model, dataset, config_manager.batch_spec(config), config_manager.schedule(config),
                      config_manager.loss_config(config), seed=config.seed,
                      augment_flags=config_manager.augment_flags(dataset.channel_mean(), config),
                      checkpoint_dir=config.checkpoint_dir, checkpoint_handler=checkpoint_handler,
                      report_handler=report_handler, progress=config_manager.get_app_settings().progress)
    if resume and os.path.exists(os.path.join(config.checkpoint_dir, LATEST)):
        trainer.resume()
    trainer.train()
    return trainer


def evaluation_service(config_manager: ConfigManager, config: RunConfig, model: VideoReIDModel,
                       dataset: TrackletDataset, report_handler: ReportHandler,
                       tensor_handler: LsttTensorHandler) -> EvaluationService:
    return EvaluationService(model, dataset, report_handler=report_handler, tensor_handler=tensor_handler,
                             progress=config_manager.get_app_settings().progress,
                             **config_manager.eval_settings(config))


class TrainCommand(BaseCommand):
    """Trains a model on the dataset's train split (Single Responsibility Principle)"""

    def __init__(self, config_manager: ConfigManager, checkpoint_handler: CheckpointHandler,
                 report_handler: ReportHandler, tensor_handler: LsttTensorHandler, resume: bool = False):
        self._config = config_manager
        self._checkpoints = checkpoint_handler
        self._reports = report_handler
        self._tensors = tensor_handler
        self.resume = resume

    @property
    def title(self) -> str:
        return "Train"

    def _execute(self) -> int:
        config = self._config.get_run_config()
        dataset = open_dataset(config, self._tensors)
        os.makedirs(config.output_dir, exist_ok=True)
        with open(os.path.join(config.output_dir, "run_config.txt"), "w", encoding="utf-8") as handle:
            handle.write(config.to_text())

        trainer = train_model(self._config, config, dataset, self._checkpoints, self._reports, self.resume)
        render_table(trainer.log_frame())
        return 0


class EvalCommand(BaseCommand):
    """Evaluates a checkpoint on the query/gallery splits"""

    def __init__(self, config_manager: ConfigManager, checkpoint_handler: CheckpointHandler,
                 report_handler: ReportHandler, tensor_handler: LsttTensorHandler,
                 checkpoint: Optional[str] = None, dump_embeddings: bool = False):
        self._config = config_manager
        self._checkpoints = checkpoint_handler
        self._reports = report_handler
        self._tensors = tensor_handler
        self.checkpoint = checkpoint
        self.dump_embeddings = dump_embeddings

    @property
    def title(self) -> str:
        return "Evaluate"

    def _execute(self) -> int:
        config = self._config.get_run_config()
        path = self.checkpoint or os.path.join(config.checkpoint_dir, LATEST)
        model = model_from_checkpoint(self._config, path, self._checkpoints)
        dataset = open_dataset(config, self._tensors)
        service = evaluation_service(self._config, config, model, dataset, self._reports, self._tensors)

        table = service.build_table()
        report = service.evaluate(table)
        service.write_report(report, config.output_dir)
        if self.dump_embeddings:
            service.dump_embeddings(table, os.path.join(config.output_dir, "embeddings"))
        render_key_values(report.to_key_values())
        return 0


class AblateCommand(BaseCommand):
    """Trains and evaluates every variant of an ablation grid over several seeds"""

    def __init__(self, config_manager: ConfigManager, checkpoint_handler: CheckpointHandler,
                 report_handler: ReportHandler, tensor_handler: LsttTensorHandler,
                 grid: str = "modules", seeds: int = 3):
        self._config = config_manager
        self._checkpoints = checkpoint_handler
        self._reports = report_handler
        self._tensors = tensor_handler
        self.grid = grid
        self.seeds = seeds

    @property
    def title(self) -> str:
        return f"Ablation: {self.grid}"

    def _validate(self) -> None:
        if self.seeds < 1:
            raise ConfigError(f"--seeds must be positive, got {self.seeds}")

    def _run_variant(self, dataset: TrackletDataset, config: RunConfig, run_dir: str) -> Dict[str, float]:
        trainer = train_model(self._config, config, dataset, self._checkpoints, self._reports)
        service = evaluation_service(self._config, config, trainer.model, dataset, self._reports, self._tensors)
        report = service.evaluate()
        service.write_report(report, run_dir)
        complexity = ComplexityCalculator(trainer.model.config).calculate(frames=config.frames_per_clip)
        return {"R1": report.rank_k[1], "R5": report.rank_k[5], "mAP": report.map_score,
                "params": complexity.param_count, "macs": complexity.mac_count}

    def _execute(self) -> int:
        config = self._config.get_run_config()
        dataset = open_dataset(config, self._tensors)
        service = AblationService(lambda c, d: self._run_variant(dataset, c, d), config.output_dir, self._reports)
        table = service.run(self.grid, config, self.seeds)
        render_table(table.loc[table["seed"] == "mean"].reset_index(drop=True))
        return 0
