from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from core.exceptions import ConfigError
from core.optim import affine_params
from core.tensor import ParamTensor
from models.features import GRANULARITIES

MOTION_MANNERS = ("global", "local")
MOTION_DIRECTIONS = ("bi", "single")


@dataclass
class MaeParams:
    """Weights of one appearance extractor: omega1 (C -> C/4) and omega2 (k*C/4 -> C)"""
    omega1_weight: ParamTensor
    omega1_bias: ParamTensor
    omega2_weight: ParamTensor
    omega2_bias: ParamTensor
    granularities: Tuple[str, ...] = GRANULARITIES

    def __post_init__(self):
        channels = self.omega1_weight.shape[0]
        quarter = self.omega1_weight.shape[1]
        if quarter * 4 != channels:
            raise ConfigError(f"omega1 must map C to C/4, got {self.omega1_weight.shape}")
        if self.omega2_weight.shape != [quarter * len(self.granularities), channels]:
            raise ConfigError(f"omega2 shape {self.omega2_weight.shape} does not fit "
                              f"{len(self.granularities)} branches of {quarter} channels")

    @classmethod
    def initialize(cls, channels: int, rng: np.random.Generator, dtype: type, name: str = "mae",
                   granularities: Tuple[str, ...] = GRANULARITIES) -> 'MaeParams':
        """Glorot omega1; zero omega2 so the block starts as an identity residual"""
        if channels % 4:
            raise ConfigError(f"MAE needs channels divisible by 4, got {channels}")
        granularities = validate_granularities(granularities)
        quarter = channels // 4
        w1, b1 = affine_params(channels, quarter, rng, dtype, f"{name}.omega1")
        w2, b2 = affine_params(quarter * len(granularities), channels, rng, dtype, f"{name}.omega2", zero=True)
        return cls(w1, b1, w2, b2, granularities)

    @property
    def channels(self) -> int:
        return self.omega1_weight.shape[0]

    def parameters(self) -> Dict[str, ParamTensor]:
        return {p.name: p for p in (self.omega1_weight, self.omega1_bias,
                                    self.omega2_weight, self.omega2_bias)}


@dataclass
class BmeParams:
    """Weights of one motion estimator: phi, psi (C -> C/2) and upsilon (C or C/2 -> C, ReLU)"""
    phi_weight: ParamTensor
    phi_bias: ParamTensor
    psi_weight: ParamTensor
    psi_bias: ParamTensor
    upsilon_weight: ParamTensor
    upsilon_bias: ParamTensor
    manner: str = "global"
    direction: str = "bi"

    def __post_init__(self):
        if self.manner not in MOTION_MANNERS:
            raise ConfigError(f"Unknown motion manner '{self.manner}', expected {MOTION_MANNERS}")
        if self.direction not in MOTION_DIRECTIONS:
            raise ConfigError(f"Unknown motion direction '{self.direction}', expected {MOTION_DIRECTIONS}")
        half = self.phi_weight.shape[1]
        expected_in = 2 * half if self.direction == "bi" else half
        if self.upsilon_weight.shape[0] != expected_in:
            raise ConfigError(f"upsilon input {self.upsilon_weight.shape[0]} does not match "
                              f"{self.direction}-direction motion of {half} channels")

    @classmethod
    def initialize(cls, channels: int, rng: np.random.Generator, dtype: type, name: str = "bme",
                   manner: str = "global", direction: str = "bi") -> 'BmeParams':
        """Glorot phi/psi; zero upsilon so the block starts as an identity residual"""
        if channels % 2:
            raise ConfigError(f"BME needs an even channel count, got {channels}")
        half = channels // 2
        phi_w, phi_b = affine_params(channels, half, rng, dtype, f"{name}.phi")
        psi_w, psi_b = affine_params(channels, half, rng, dtype, f"{name}.psi")
        upsilon_in = channels if direction == "bi" else half
        ups_w, ups_b = affine_params(upsilon_in, channels, rng, dtype, f"{name}.upsilon", zero=True)
        return cls(phi_w, phi_b, psi_w, psi_b, ups_w, ups_b, manner, direction)

    @property
    def channels(self) -> int:
        return self.phi_weight.shape[0]

    def parameters(self) -> Dict[str, ParamTensor]:
        return {p.name: p for p in (self.phi_weight, self.phi_bias, self.psi_weight,
                                    self.psi_bias, self.upsilon_weight, self.upsilon_bias)}


def validate_granularities(granularities) -> Tuple[str, ...]:
    """Normalize a granularity selection to canonical order, rejecting unknown or empty sets"""
    chosen = {str(g).strip().upper() for g in granularities}
    unknown = chosen - set(GRANULARITIES)
    if unknown:
        raise ConfigError(f"Unknown granularities {sorted(unknown)}, expected a subset of {GRANULARITIES}")
    if not chosen:
        raise ConfigError("MAE needs at least one granularity")
    return tuple(g for g in GRANULARITIES if g in chosen)
