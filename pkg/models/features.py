from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core.exceptions import DimensionError
from core.tensor import DenseTensor

GRANULARITIES: Tuple[str, ...] = ("A1", "A2", "A3", "A4")


@dataclass
class FrameFeatureBlock:
    """Per-clip feature stack F of shape [T, H, W, C] (Value Object pattern)"""
    tensor: DenseTensor

    def __post_init__(self):
        shape = self.tensor.shape
        if len(shape) != 4:
            raise DimensionError(f"FrameFeatureBlock needs a [T,H,W,C] tensor, got {shape}")
        if shape[0] < 1 or shape[1] * shape[2] < 1 or shape[3] < 1:
            raise DimensionError(f"FrameFeatureBlock has an empty axis: {shape}")

    @classmethod
    def from_array(cls, array: np.ndarray, requires_grad: bool = False) -> 'FrameFeatureBlock':
        return cls(DenseTensor(array, requires_grad=requires_grad))

    @property
    def frames(self) -> int:
        return self.tensor.shape[0]

    @property
    def height(self) -> int:
        return self.tensor.shape[1]

    @property
    def width(self) -> int:
        return self.tensor.shape[2]

    @property
    def channels(self) -> int:
        return self.tensor.shape[3]

    @property
    def positions(self) -> int:
        """Number of local positions T*H*W"""
        return self.frames * self.height * self.width


@dataclass
class GranularitySet:
    """Pooled features X, dependency matrices D and aggregates A of one clip (Aggregate Root pattern)

    Index i runs over the kept granularities; X1 is always built because every D^i uses it.
    """
    frames: int
    height: int
    width: int
    granularities: Tuple[str, ...] = GRANULARITIES
    X1: Optional[DenseTensor] = None
    X2: Optional[DenseTensor] = None
    X3: Optional[DenseTensor] = None
    X4: Optional[DenseTensor] = None
    D1: Optional[DenseTensor] = None
    D2: Optional[DenseTensor] = None
    D3: Optional[DenseTensor] = None
    D4: Optional[DenseTensor] = None
    A1: Optional[DenseTensor] = None
    A2: Optional[DenseTensor] = None
    A3: Optional[DenseTensor] = None
    A4: Optional[DenseTensor] = None

    @property
    def indices(self) -> Tuple[int, ...]:
        """Granularity indices (1..4) kept in this set"""
        return tuple(int(name[1]) for name in self.granularities)

    def x(self, i: int) -> Optional[DenseTensor]:
        return getattr(self, f"X{i}")

    def d(self, i: int) -> Optional[DenseTensor]:
        return getattr(self, f"D{i}")

    def a(self, i: int) -> Optional[DenseTensor]:
        return getattr(self, f"A{i}")


@dataclass
class MotionPair:
    """Forward/backward motion maps and their fused per-frame motion"""
    m_fwd: DenseTensor
    m_bwd: Optional[DenseTensor]
    fused: DenseTensor

    def __post_init__(self):
        if self.m_bwd is not None and self.m_bwd.shape != self.m_fwd.shape:
            raise DimensionError(f"motion maps differ in shape: {self.m_fwd.shape} vs {self.m_bwd.shape}")
