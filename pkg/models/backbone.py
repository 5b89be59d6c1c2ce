from dataclasses import dataclass, field, replace
from typing import Dict, Tuple

from core.exceptions import ConfigError
from core.tensor import DTYPES, DenseTensor
from models.blocks import MOTION_DIRECTIONS, MOTION_MANNERS, validate_granularities
from models.features import GRANULARITIES

# insertion sets per named variant: (mae stages, bme stages)
VARIANTS: Dict[str, Tuple[Tuple[int, ...], Tuple[int, ...]]] = {
    "baseline": ((), ()),
    "+mae": ((2, 3), ()),
    "+bme": ((), (2, 3)),
    "+mae+bme": ((2, 3), (2, 3)),
}


@dataclass
class BackboneConfig:
    """Encoder layout: stage widths, frame size, block insertion points and classifier size"""
    stage_channels: Tuple[int, ...] = (16, 32, 64, 128)
    input_hw: Tuple[int, int] = (64, 32)
    insert_mae_after: Tuple[int, ...] = (2, 3)
    insert_bme_after: Tuple[int, ...] = (2, 3)
    num_identities: int = 20
    mae_granularities: Tuple[str, ...] = GRANULARITIES
    bme_manner: str = "global"
    bme_direction: str = "bi"
    precision: str = "f32"

    def __post_init__(self):
        self.stage_channels = tuple(int(c) for c in self.stage_channels)
        self.insert_mae_after = tuple(sorted({int(s) for s in self.insert_mae_after}))
        self.insert_bme_after = tuple(sorted({int(s) for s in self.insert_bme_after}))
        self.mae_granularities = validate_granularities(self.mae_granularities)

        if len(self.stage_channels) != 4:
            raise ConfigError(f"Backbone needs 4 stage channel counts, got {self.stage_channels}")
        bad = [c for c in self.stage_channels if c <= 0 or c % 4]
        if bad:
            raise ConfigError(f"Stage channels must be positive multiples of 4, got {bad}")
        stages = set(range(1, len(self.stage_channels) + 1))
        for name, points in (("insert_mae_after", self.insert_mae_after),
                             ("insert_bme_after", self.insert_bme_after)):
            if not set(points) <= stages:
                raise ConfigError(f"{name} must be a subset of {sorted(stages)}, got {points}")
        height, width = self.input_hw
        if height % self.downsampling or width % self.downsampling or height <= 0 or width <= 0:
            raise ConfigError(f"Frame size {self.input_hw} is not divisible by the total "
                              f"downsampling {self.downsampling}")
        if self.num_identities < 1:
            raise ConfigError(f"num_identities must be positive, got {self.num_identities}")
        if self.bme_manner not in MOTION_MANNERS:
            raise ConfigError(f"Unknown motion manner '{self.bme_manner}'")
        if self.bme_direction not in MOTION_DIRECTIONS:
            raise ConfigError(f"Unknown motion direction '{self.bme_direction}'")
        if self.precision not in DTYPES:
            raise ConfigError(f"Unknown precision '{self.precision}'")

    @property
    def downsampling(self) -> int:
        return 2 ** len(self.stage_channels)

    @property
    def embedding_dim(self) -> int:
        return self.stage_channels[-1]

    @property
    def uses_motion(self) -> bool:
        return bool(self.insert_bme_after)

    def stage_shape(self, stage: int, frames: int) -> Tuple[int, int, int, int]:
        """[T,H,W,C] after stage ``stage`` (1-based)"""
        height, width = self.input_hw
        factor = 2 ** stage
        return frames, height // factor, width // factor, self.stage_channels[stage - 1]

    def with_variant(self, variant: str) -> 'BackboneConfig':
        """Copy with the insertion sets of a named variant (baseline, +mae, +bme, +mae+bme)"""
        if variant not in VARIANTS:
            raise ConfigError(f"Unknown variant '{variant}', expected one of {sorted(VARIANTS)}")
        mae, bme = VARIANTS[variant]
        return replace(self, insert_mae_after=mae, insert_bme_after=bme)


@dataclass
class VideoEmbedding:
    """Video-level representation for retrieval plus classifier logits"""
    vector: DenseTensor
    identity_logits: DenseTensor


@dataclass
class ComplexityReport:
    """Parameter and per-clip multiply-accumulate counts, with a per-component breakdown"""
    param_count: int
    mac_count: int
    components: Dict[str, Tuple[int, int]] = field(default_factory=dict)
