"""
Bi-direction motion estimation.

Each frame's global feature (spatial mean) is projected by phi and multiplied channelwise
into psi of its temporal neighbours. Neighbours are clamped at the clip ends: frame 0 is
its own predecessor and frame T-1 its own successor.
"""
import logging
from typing import Dict, List, Optional

from core import ops
from core.base_classes import BaseFeatureBlock
from core.exceptions import ConfigError, DimensionError
from core.tensor import DenseTensor, ParamTensor, counting_scope
from models.blocks import BmeParams
from models.features import FrameFeatureBlock, MotionPair

logger = logging.getLogger(__name__)

PAIRING_SCOPE = "pairing"


def frame_global(frame: DenseTensor) -> DenseTensor:
    """[H,W,C] -> [1,1,C] by spatial mean"""
    if frame.ndim != 3:
        raise DimensionError(f"frame_global expects [H,W,C], got {frame.shape}")
    return ops.reshape(ops.reduce_mean(frame, {0, 1}), [1, 1, frame.shape[2]])


def _local_pairing(current: DenseTensor, neighbour: DenseTensor) -> DenseTensor:
    """Pair every current position with every neighbour position ([HW, C/2] each)"""
    similarity = ops.matmul(current, ops.transpose(neighbour))
    weights = ops.softmax_rows(ops.transpose(similarity))
    matched = ops.matmul(weights, current)
    return ops.multiply(matched, neighbour)


def estimate_motion(frame: DenseTensor, neighbour: DenseTensor, params: BmeParams) -> DenseTensor:
    """Motion map of one frame against one neighbour, [H,W,C] x [H,W,C] -> [H,W,C/2]"""
    if frame.shape != neighbour.shape or frame.ndim != 3:
        raise DimensionError(f"estimate_motion: frames {frame.shape} and {neighbour.shape} differ")
    channels = frame.shape[2]
    if channels % 2:
        raise ConfigError(f"BME needs an even channel count, got {channels}")
    h, w, half = frame.shape[0], frame.shape[1], channels // 2

    psi_nbr = ops.pointwise_affine(neighbour, params.psi_weight, params.psi_bias)
    if params.manner == "local":
        phi_cur = ops.pointwise_affine(frame, params.phi_weight, params.phi_bias)
        with counting_scope(PAIRING_SCOPE):
            motion = _local_pairing(ops.reshape(phi_cur, [h * w, half]), ops.reshape(psi_nbr, [h * w, half]))
        return ops.reshape(motion, [h, w, half])

    phi_global = ops.pointwise_affine(frame_global(frame), params.phi_weight, params.phi_bias)
    with counting_scope(PAIRING_SCOPE):
        return ops.broadcast_hadamard(phi_global, psi_nbr)


def _neighbour_indices(frames: int):
    successors = [min(t + 1, frames - 1) for t in range(frames)]
    predecessors = [max(t - 1, 0) for t in range(frames)]
    return successors, predecessors


class _ClipMotionEstimator:
    """Projects a clip through phi/psi once and pairs frames with any neighbour schedule"""

    def __init__(self, features: FrameFeatureBlock, params: BmeParams):
        t, h, w, c = features.frames, features.height, features.width, features.channels
        self.shape = (t, h, w, c // 2)
        self.local = params.manner == "local"
        psi_all = ops.pointwise_affine(features.tensor, params.psi_weight, params.psi_bias)
        if self.local:
            phi_all = ops.pointwise_affine(features.tensor, params.phi_weight, params.phi_bias)
            self.phi = ops.reshape(phi_all, [t, h * w, c // 2])
            self.psi = ops.reshape(psi_all, [t, h * w, c // 2])
        else:
            globals_ = ops.reshape(ops.reduce_mean(features.tensor, {1, 2}), [t, 1, 1, c])
            self.phi = ops.pointwise_affine(globals_, params.phi_weight, params.phi_bias)
            self.psi = psi_all

    def against(self, neighbours: List[int]) -> DenseTensor:
        """Motion maps [T,H,W,C/2] of every frame against neighbours[t]"""
        t, h, w, half = self.shape
        with counting_scope(PAIRING_SCOPE):
            if not self.local:
                return ops.broadcast_hadamard(self.phi, ops.take_frames(self.psi, neighbours))
            maps = []
            for frame, neighbour in enumerate(neighbours):
                current = ops.reshape(ops.take_frames(self.phi, [frame]), [h * w, half])
                other = ops.reshape(ops.take_frames(self.psi, [neighbour]), [h * w, half])
                maps.append(ops.reshape(_local_pairing(current, other), [h, w, half]))
            return ops.stack(maps)


def bme_motion(features: FrameFeatureBlock, params: BmeParams) -> MotionPair:
    """All frames' M^f, M^b (as [T,H,W,C/2]) and the fused motion [T,H,W,C]"""
    if features.channels % 2:
        raise ConfigError(f"BME needs an even channel count, got {features.channels}")
    if features.channels != params.channels:
        raise DimensionError(f"BME built for {params.channels} channels got features {features.tensor.shape}")
    successors, predecessors = _neighbour_indices(features.frames)
    estimator = _ClipMotionEstimator(features, params)

    m_fwd = estimator.against(successors)
    m_bwd = estimator.against(predecessors) if params.direction == "bi" else None
    parts = [m_fwd] if m_bwd is None else [m_fwd, m_bwd]
    fused = ops.pointwise_affine(ops.concat_channels(parts), params.upsilon_weight,
                                 params.upsilon_bias, relu=True)
    return MotionPair(m_fwd=m_fwd, m_bwd=m_bwd, fused=fused)


def bme_forward(features: FrameFeatureBlock, params: BmeParams,
                taps: Optional[Dict[str, DenseTensor]] = None) -> DenseTensor:
    """Short-term motion representation F^m stacked over frames, [T,H,W,C]"""
    pair = bme_motion(features, params)
    if taps is not None:
        taps["Mf"] = pair.m_fwd
        if pair.m_bwd is not None:
            taps["Mb"] = pair.m_bwd
    return pair.fused


class BiDirectionMotionEstimator(BaseFeatureBlock):
    """Plug-in block producing F^m for one insertion point"""

    def __init__(self, params: BmeParams):
        self.params = params

    @property
    def kind(self) -> str:
        return "bme"

    def parameters(self) -> Dict[str, ParamTensor]:
        return self.params.parameters()

    def _validate_features(self, features: FrameFeatureBlock) -> None:
        if features.channels != self.params.channels:
            raise DimensionError(f"BME expects {self.params.channels} channels, got {features.channels}")

    def _forward(self, features: FrameFeatureBlock,
                 taps: Optional[Dict[str, DenseTensor]]) -> DenseTensor:
        return bme_forward(features, self.params, taps)
