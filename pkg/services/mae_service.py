"""
Multi-granularity appearance extraction.

X1 holds one row per local position (row index t*H*W + h*W + w). X2 pools X1 over
time, X3 over space, X4 over both. Each D^i is a softmax over all T*H*W local
positions, so every row of D^i is a distribution over locals.
"""
import logging
from typing import Dict, Optional

from core import ops
from core.base_classes import BaseFeatureBlock
from core.exceptions import ConfigError, DimensionError
from core.tensor import DenseTensor, ParamTensor
from models.blocks import MaeParams
from models.features import FrameFeatureBlock, GranularitySet

logger = logging.getLogger(__name__)


def build_granularities(features: FrameFeatureBlock, params: MaeParams) -> GranularitySet:
    """Channel-reduce F with omega1 and pool it into the granularity features X_i"""
    if features.channels % 4:
        raise ConfigError(f"MAE needs channels divisible by 4, got {features.channels}")
    if features.channels != params.channels:
        raise DimensionError(f"MAE built for {params.channels} channels got features {features.tensor.shape}")
    t, h, w = features.frames, features.height, features.width
    quarter = features.channels // 4

    reduced = ops.pointwise_affine(features.tensor, params.omega1_weight, params.omega1_bias)
    per_frame = ops.reshape(reduced, [t, h * w, quarter])

    granularities = GranularitySet(frames=t, height=h, width=w, granularities=params.granularities)
    granularities.X1 = ops.reshape(reduced, [t * h * w, quarter])
    indices = granularities.indices
    if 2 in indices:
        granularities.X2 = ops.reduce_mean(per_frame, {0})
    if 3 in indices:
        granularities.X3 = ops.reduce_mean(per_frame, {1})
    if 4 in indices:
        granularities.X4 = ops.reshape(ops.reduce_mean(per_frame, {0, 1}), [1, quarter])
    return granularities


def compute_dependencies(granularities: GranularitySet) -> GranularitySet:
    """D^i = softmax_rows(X_i X1^T)"""
    keys = ops.transpose(granularities.X1)
    for i in granularities.indices:
        logits = ops.matmul(granularities.x(i), keys)
        setattr(granularities, f"D{i}", ops.softmax_rows(logits))
    return granularities


def aggregate_appearances(granularities: GranularitySet) -> GranularitySet:
    """A1 = D1 X1; A2..A4 are D^i X1 replicated back over the pooled-away axes"""
    t, h, w = granularities.frames, granularities.height, granularities.width
    hw = h * w
    quarter = granularities.X1.shape[1]
    pooled_view = {1: [t, hw, quarter], 2: [1, hw, quarter], 3: [t, 1, quarter], 4: [1, 1, quarter]}

    for i in granularities.indices:
        aggregate = ops.matmul(granularities.d(i), granularities.X1)
        if i != 1:
            extended = ops.expand(ops.reshape(aggregate, pooled_view[i]), [t, hw, quarter])
            aggregate = ops.reshape(extended, [t * hw, quarter])
        setattr(granularities, f"A{i}", aggregate)
    return granularities


def mae_forward(features: FrameFeatureBlock, params: MaeParams,
                taps: Optional[Dict[str, DenseTensor]] = None) -> DenseTensor:
    """Long-term appearance representation F^a = omega2([A1, A2, A3, A4]) as [T,H,W,C]"""
    granularities = aggregate_appearances(compute_dependencies(build_granularities(features, params)))
    fused = ops.concat_channels([granularities.a(i) for i in granularities.indices])
    appearance = ops.pointwise_affine(fused, params.omega2_weight, params.omega2_bias)
    if taps is not None:
        for i in granularities.indices:
            taps[f"D{i}"] = granularities.d(i)
    return ops.reshape(appearance, features.tensor.shape)


class MultiGranularityAppearanceExtractor(BaseFeatureBlock):
    """Plug-in block producing F^a for one insertion point"""

    def __init__(self, params: MaeParams):
        self.params = params

    @property
    def kind(self) -> str:
        return "mae"

    def parameters(self) -> Dict[str, ParamTensor]:
        return self.params.parameters()

    def _validate_features(self, features: FrameFeatureBlock) -> None:
        if features.channels != self.params.channels:
            raise DimensionError(f"MAE expects {self.params.channels} channels, got {features.channels}")

    def _forward(self, features: FrameFeatureBlock,
                 taps: Optional[Dict[str, DenseTensor]]) -> DenseTensor:
        return mae_forward(features, self.params, taps)
