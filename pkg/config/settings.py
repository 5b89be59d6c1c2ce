import logging
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from core.exceptions import ConfigError
from models.backbone import BackboneConfig
from models.dataset import AugmentFlags, BatchSpec, SynthConfig
from models.training import LossConfig, ScheduleConfig

logger = logging.getLogger(__name__)

TRUE_WORDS = {"true", "1", "yes", "on"}
FALSE_WORDS = {"false", "0", "no", "off"}


def _env_flag(name: str, default: bool) -> bool:
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in TRUE_WORDS


@dataclass
class AppSettings:
    """Process-level settings (Single Responsibility Principle)"""

    log_level: str = "INFO"
    progress: bool = True
    default_config_path: Optional[str] = None
    log_format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    @classmethod
    def from_env(cls) -> 'AppSettings':
        """Create settings from environment variables"""
        return cls(
            log_level=os.getenv('LSTRL_LOG_LEVEL', cls.log_level).upper(),
            progress=_env_flag('LSTRL_PROGRESS', cls.progress),
            default_config_path=os.getenv('LSTRL_CONFIG', cls.default_config_path),
        )


def _items(kind: type) -> Dict[str, Any]:
    return {"item": kind}


@dataclass
class RunConfig:
    """Every knob of a run; field names are the config-file keys"""

    seed: int = 0
    precision: str = "f32"
    dataset_root: str = "data/synthetic"
    output_dir: str = "runs/default"
    checkpoint_dir: str = "runs/default/checkpoints"

    # Backbone
    stage_channels: Tuple[int, ...] = field(default=(16, 32, 64, 128), metadata=_items(int))
    frame_height: int = 64
    frame_width: int = 32
    insert_mae_after: Tuple[int, ...] = field(default=(2, 3), metadata=_items(int))
    insert_bme_after: Tuple[int, ...] = field(default=(2, 3), metadata=_items(int))
    mae_granularities: Tuple[str, ...] = field(default=("A1", "A2", "A3", "A4"), metadata=_items(str))
    bme_manner: str = "global"
    bme_direction: str = "bi"

    # Batches
    batch_identities: int = 8
    clips_per_identity: int = 2
    frames_per_clip: int = 8
    batches_per_epoch: int = 32

    # Augmentation
    augment_crop: bool = True
    augment_erase: bool = True
    crop_padding: int = 4
    erase_probability: float = 0.5
    erase_max_area: float = 0.25

    # Schedule
    base_lr: float = 0.003
    decay_factor: float = 0.1
    decay_every: int = 7
    total_epochs: int = 40
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    # Losses
    triplet_margin: float = 0.3
    ce_weight: float = 1.0
    triplet_weight: float = 1.0

    # Evaluation
    eval_frames: int = 8
    eval_batch_size: int = 8
    eval_metric: str = "cosine"
    eval_ranks: Tuple[int, ...] = field(default=(1, 5), metadata=_items(int))

    # Synthetic data
    synth_identities: int = 20
    synth_tracklets_per_identity: int = 4
    synth_frames_per_tracklet: int = 16
    synth_palette_size: int = 10
    synth_num_cameras: int = 2
    synth_noise: float = 0.02
    synth_brightness: Tuple[float, ...] = field(default=(1.0, 0.85), metadata=_items(float))

    # Gradient checks
    gradcheck_seeds: int = 20
    gradcheck_epsilon: float = 1e-5
    gradcheck_tolerance: float = 1e-4
    gradcheck_network_tolerance: float = 1e-3

    def __post_init__(self):
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32 or f64, got '{self.precision}'")
        if self.eval_metric not in ("cosine", "euclidean"):
            raise ConfigError(f"eval_metric must be cosine or euclidean, got '{self.eval_metric}'")
        if self.frames_per_clip < 1 or self.eval_frames < 1 or self.eval_batch_size < 1:
            raise ConfigError("frame counts and eval_batch_size must be positive")
        if any(k < 1 for k in self.eval_ranks):
            raise ConfigError(f"eval_ranks must be positive, got {self.eval_ranks}")
        if self.gradcheck_seeds < 1 or self.gradcheck_epsilon <= 0:
            raise ConfigError("gradcheck_seeds must be >= 1 and gradcheck_epsilon positive")

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def parse_value(cls, key: str, text: str) -> Any:
        """Convert the text of one value to the type of ``key``"""
        entry = {f.name: f for f in fields(cls)}.get(key)
        if entry is None:
            raise ConfigError(f"Unknown config key '{key}'")
        text = text.strip()
        try:
            if "item" in entry.metadata:
                item = entry.metadata["item"]
                return tuple(item(part.strip()) for part in text.split(",") if part.strip())
            if entry.type in (bool, "bool"):
                lowered = text.lower()
                if lowered not in TRUE_WORDS | FALSE_WORDS:
                    raise ValueError(f"not a boolean: {text}")
                return lowered in TRUE_WORDS
            if entry.type in (int, "int"):
                return int(text)
            if entry.type in (float, "float"):
                return float(text)
            return text
        except ValueError as exc:
            raise ConfigError(f"Bad value for '{key}': {exc}")

    @classmethod
    def parse(cls, text: str, base: Optional['RunConfig'] = None) -> 'RunConfig':
        """Parse ``key = value`` lines (``#`` comments, blank lines ignored) on top of ``base``"""
        values: Dict[str, Any] = {}
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"Line {number}: expected 'key = value', got '{raw.strip()}'")
            key, value = line.split("=", 1)
            values[key.strip()] = cls.parse_value(key.strip(), value)
        return replace(base or cls(), **values)

    def with_overrides(self, assignments: Iterable[str]) -> 'RunConfig':
        """Apply ``key=value`` strings"""
        values = {}
        for assignment in assignments:
            if "=" not in assignment:
                raise ConfigError(f"Override '{assignment}' is not of the form key=value")
            key, value = assignment.split("=", 1)
            values[key.strip()] = self.parse_value(key.strip(), value)
        return replace(self, **values)

    def to_text(self) -> str:
        lines = []
        for entry in fields(self):
            value = getattr(self, entry.name)
            if isinstance(value, tuple):
                text = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                text = repr(value)
            elif isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = str(value)
            lines.append(f"{entry.name} = {text}")
        return "\n".join(lines) + "\n"

    def backbone_config(self, num_identities: int) -> BackboneConfig:
        return BackboneConfig(stage_channels=self.stage_channels, input_hw=(self.frame_height, self.frame_width),
                              insert_mae_after=self.insert_mae_after, insert_bme_after=self.insert_bme_after,
                              num_identities=num_identities, mae_granularities=self.mae_granularities,
                              bme_manner=self.bme_manner, bme_direction=self.bme_direction,
                              precision=self.precision)


class ConfigManager:
    """Manages application configuration (Singleton pattern)"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if not self._initialized:
            self.app_settings = AppSettings.from_env()
            self.run_config = RunConfig()
            self._initialized = True

    def get_app_settings(self) -> AppSettings:
        """Get application settings"""
        return self.app_settings

    def get_run_config(self) -> RunConfig:
        return self.run_config

    def load(self, path: Optional[str] = None, overrides: Iterable[str] = (),
             **shortcuts: Any) -> RunConfig:
        """Read a config file, apply ``--set`` overrides and then CLI shortcuts"""
        path = path or self.app_settings.default_config_path
        config = RunConfig()
        if path:
            try:
                with open(path, encoding="utf-8") as handle:
                    config = RunConfig.parse(handle.read())
            except OSError as exc:
                raise ConfigError(f"Could not read config {path}: {exc}")
        config = config.with_overrides(overrides)
        config = self._apply_shortcuts(config, **shortcuts)
        self.run_config = config
        logger.debug("Loaded run config from %s", path or "defaults")
        return config

    @staticmethod
    def _apply_shortcuts(config: RunConfig, seed: Optional[int] = None, variant: Optional[str] = None,
                         ablate_granularity: Optional[Iterable[str]] = None, motion: Optional[str] = None,
                         direction: Optional[str] = None) -> RunConfig:
        values: Dict[str, Any] = {}
        if seed is not None:
            values["seed"] = seed
        if variant is not None:
            variant_config = BackboneConfig().with_variant(variant)
            values["insert_mae_after"] = variant_config.insert_mae_after
            values["insert_bme_after"] = variant_config.insert_bme_after
        if ablate_granularity:
            removed = {g.strip().upper() for g in ablate_granularity}
            values["mae_granularities"] = tuple(g for g in config.mae_granularities if g not in removed)
        if motion is not None:
            values["bme_manner"] = motion
        if direction is not None:
            values["bme_direction"] = direction
        return replace(config, **values)

    def update_settings(self, **kwargs) -> None:
        """Update run settings"""
        for key in kwargs:
            if key not in RunConfig.keys():
                raise ConfigError(f"Unknown config key '{key}'")
        self.run_config = replace(self.run_config, **kwargs)

    @staticmethod
    def validate_paths(*paths: str) -> None:
        """Raise ConfigError naming the first path that does not exist"""
        for path in paths:
            if not os.path.exists(path):
                raise ConfigError(f"Path does not exist: {path}")

    def backbone_config(self, num_identities: int, config: Optional[RunConfig] = None) -> BackboneConfig:
        return (config or self.run_config).backbone_config(num_identities)

    def batch_spec(self, config: Optional[RunConfig] = None) -> BatchSpec:
        c = config or self.run_config
        return BatchSpec(num_identities=c.batch_identities, clips_per_identity=c.clips_per_identity,
                         frames_per_clip=c.frames_per_clip, frame_hw=(c.frame_height, c.frame_width))

    def schedule(self, config: Optional[RunConfig] = None) -> ScheduleConfig:
        c = config or self.run_config
        return ScheduleConfig(base_lr=c.base_lr, decay_factor=c.decay_factor, decay_every=c.decay_every,
                              total_epochs=c.total_epochs, batches_per_epoch=c.batches_per_epoch,
                              adam_beta1=c.adam_beta1, adam_beta2=c.adam_beta2, adam_eps=c.adam_eps)

    def loss_config(self, config: Optional[RunConfig] = None) -> LossConfig:
        c = config or self.run_config
        return LossConfig(triplet_margin=c.triplet_margin, ce_weight=c.ce_weight,
                          triplet_weight=c.triplet_weight)

    def augment_flags(self, fill: Optional[np.ndarray] = None, config: Optional[RunConfig] = None) -> AugmentFlags:
        c = config or self.run_config
        return AugmentFlags(crop=c.augment_crop, erase=c.augment_erase, padding=c.crop_padding,
                            erase_probability=c.erase_probability, erase_max_area=c.erase_max_area, fill=fill)

    def synth_config(self, config: Optional[RunConfig] = None) -> SynthConfig:
        c = config or self.run_config
        return SynthConfig(num_identities=c.synth_identities, tracklets_per_identity=c.synth_tracklets_per_identity,
                           frames_per_tracklet=c.synth_frames_per_tracklet, palette_size=c.synth_palette_size,
                           frame_hw=(c.frame_height, c.frame_width), num_cameras=c.synth_num_cameras,
                           noise=c.synth_noise, brightness=c.synth_brightness, rng_seed=c.seed)

    def eval_settings(self, config: Optional[RunConfig] = None) -> Dict[str, Any]:
        c = config or self.run_config
        return {"frames": c.eval_frames, "batch_size": c.eval_batch_size, "metric": c.eval_metric,
                "ranks": c.eval_ranks}
