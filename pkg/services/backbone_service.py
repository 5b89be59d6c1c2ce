"""
Toy four-stage video encoder with plug-in appearance/motion blocks, and its complexity accounting.

Each stage is a 3x3 convolution (unfold + per-position affine), ReLU, and 2x2 mean
pooling. After a configured stage, F <- F + F^a + F^m. The head is GAP over space,
TAP over time, then a linear identity classifier.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core import ops
from core.base_classes import BaseCalculator, BaseFeatureBlock
from core.exceptions import ConfigError, DataError, DimensionError
from core.optim import affine_params
from core.tensor import DenseTensor, ParamTensor, resolve_dtype
from models.backbone import BackboneConfig, ComplexityReport, VideoEmbedding
from models.blocks import BmeParams, MaeParams
from models.features import FrameFeatureBlock
from services.bme_service import BiDirectionMotionEstimator
from services.mae_service import MultiGranularityAppearanceExtractor

logger = logging.getLogger(__name__)

OPTIMIZER_SUFFIXES = (".adam_m", ".adam_v", ".step_count")


def is_bookkeeping(name: str) -> bool:
    """Optimizer moments, step counts and meta.* entries that sit beside parameters in a checkpoint"""
    return name.startswith("meta.") or name.endswith(OPTIMIZER_SUFFIXES)


class VideoReIDModel:
    """Encoder + plug-in blocks + classifier (Aggregate Root pattern)

    Backbone and classifier weights come from one random stream and each block from its
    own, so models differing only in inserted blocks share identical backbone weights.
    """

    def __init__(self, config: BackboneConfig, seed: int = 0):
        self.config = config
        self.dtype = resolve_dtype(config.precision)
        backbone_rng = np.random.default_rng([seed, 0])

        self.stages: List[Tuple[ParamTensor, ParamTensor]] = []
        c_in = 3
        for stage, c_out in enumerate(config.stage_channels, start=1):
            self.stages.append(affine_params(9 * c_in, c_out, backbone_rng, self.dtype, f"stage{stage}.conv"))
            c_in = c_out
        self.classifier = affine_params(config.embedding_dim, config.num_identities,
                                        backbone_rng, self.dtype, "classifier")

        self.blocks: Dict[int, List[BaseFeatureBlock]] = {}
        for stage, channels in enumerate(config.stage_channels, start=1):
            blocks: List[BaseFeatureBlock] = []
            if stage in config.insert_mae_after:
                params = MaeParams.initialize(channels, np.random.default_rng([seed, 1, stage]), self.dtype,
                                              f"stage{stage}.mae", config.mae_granularities)
                blocks.append(MultiGranularityAppearanceExtractor(params))
            if stage in config.insert_bme_after:
                params = BmeParams.initialize(channels, np.random.default_rng([seed, 2, stage]), self.dtype,
                                              f"stage{stage}.bme", config.bme_manner, config.bme_direction)
                blocks.append(BiDirectionMotionEstimator(params))
            if blocks:
                self.blocks[stage] = blocks

    def parameters(self) -> Dict[str, ParamTensor]:
        """All learnable tensors keyed by name, sorted by name"""
        params: Dict[str, ParamTensor] = {}
        for weight, bias in self.stages + [self.classifier]:
            params[weight.name] = weight
            params[bias.name] = bias
        for blocks in self.blocks.values():
            for block in blocks:
                params.update(block.parameters())
        return dict(sorted(params.items()))

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def load_state(self, arrays: Dict[str, np.ndarray]) -> None:
        """Overwrite parameter values from named arrays; names and shapes must match exactly"""
        params = self.parameters()
        missing = sorted(set(params) - set(arrays))
        if missing:
            raise DataError(f"Checkpoint lacks parameters {missing}")
        unexpected = sorted(name for name in arrays if name not in params and not is_bookkeeping(name))
        if unexpected:
            raise DataError(f"Checkpoint holds parameters this model does not have: {unexpected}")
        for name, param in params.items():
            array = np.asarray(arrays[name])
            if list(array.shape) != param.shape:
                raise DataError(f"Checkpoint tensor {name} has shape {list(array.shape)}, expected {param.shape}")
            param.value.data[...] = array.astype(self.dtype)

    def _check_clip(self, clip: DenseTensor) -> None:
        if clip.ndim != 4 or clip.shape[3] != 3:
            raise DimensionError(f"Expected a [T,H,W,3] clip, got {clip.shape}")
        frames, height, width, _ = clip.shape
        factor = self.config.downsampling
        if height % factor or width % factor:
            raise ConfigError(f"Clip frames {height}x{width} are not divisible by the downsampling {factor}")
        if self.config.uses_motion and frames < 2:
            raise ConfigError(f"Motion blocks need at least 2 frames, got {frames}")

    def encode_clip(self, frames, taps: Optional[Dict[str, DenseTensor]] = None
                    ) -> Tuple[List[FrameFeatureBlock], VideoEmbedding]:
        """Per-stage features and the video embedding of one clip [T,H,W,3]"""
        clip = frames if isinstance(frames, DenseTensor) else DenseTensor(np.asarray(frames, dtype=self.dtype))
        self._check_clip(clip)

        features = clip
        per_stage: List[FrameFeatureBlock] = []
        for stage, (weight, bias) in enumerate(self.stages, start=1):
            conv = ops.pointwise_affine(ops.unfold_3x3(features), weight, bias, relu=True)
            features = ops.avg_pool_2x2(conv)
            blocks = self.blocks.get(stage)
            if blocks:
                block_input = FrameFeatureBlock(features)
                residuals = []
                for block in blocks:
                    block_taps: Optional[Dict[str, DenseTensor]] = {} if taps is not None else None
                    residuals.append(block.forward(block_input, block_taps))
                    if taps is not None:
                        taps.update({f"stage{stage}.{name}": t for name, t in block_taps.items()})
                features = ops.add(features, *residuals)
            per_stage.append(FrameFeatureBlock(features))

        spatial = ops.reduce_mean(features, {1, 2})
        vector = ops.reduce_mean(spatial, {0})
        logits = ops.pointwise_affine(vector, *self.classifier)
        return per_stage, VideoEmbedding(vector=vector, identity_logits=logits)

    def embed(self, frames) -> VideoEmbedding:
        return self.encode_clip(frames)[1]

    def encode_batch(self, clips: Sequence) -> Tuple[DenseTensor, DenseTensor]:
        """Stacked embeddings [N,C] and logits [N,num_identities]"""
        embeddings = [self.embed(clip) for clip in clips]
        return (ops.stack([e.vector for e in embeddings]),
                ops.stack([e.identity_logits for e in embeddings]))


class ComplexityCalculator(BaseCalculator):
    """Closed-form parameter and multiply counts per component (Single Responsibility Principle)"""

    def __init__(self, config: BackboneConfig):
        self.config = config

    def _validate_inputs(self, **kwargs) -> bool:
        return kwargs.get("frames", 1) >= 1

    def _perform_calculation(self, frames: int = 8, **kwargs) -> ComplexityReport:
        config = self.config
        components: Dict[str, Tuple[int, int]] = {}
        height, width = config.input_hw
        c_in = 3
        for stage, channels in enumerate(config.stage_channels, start=1):
            components[f"stage{stage}.conv"] = (9 * c_in * channels + channels,
                                                frames * height * width * 9 * c_in * channels)
            height, width = height // 2, width // 2
            if stage in config.insert_mae_after:
                components[f"stage{stage}.mae"] = self._mae_counts(frames, height, width, channels)
            if stage in config.insert_bme_after:
                components[f"stage{stage}.bme"] = self._bme_counts(frames, height, width, channels)
            c_in = channels
        ids = config.num_identities
        components["classifier"] = (config.embedding_dim * ids + ids, config.embedding_dim * ids)

        return ComplexityReport(param_count=sum(p for p, _ in components.values()),
                                mac_count=sum(m for _, m in components.values()),
                                components=components)

    def _mae_counts(self, frames: int, height: int, width: int, channels: int) -> Tuple[int, int]:
        quarter = channels // 4
        kept = [int(g[1]) for g in self.config.mae_granularities]
        positions, spatial = frames * height * width, height * width
        fused_in = quarter * len(kept)
        params = (channels * quarter + quarter) + (fused_in * channels + channels)
        rows = sum({1: positions, 2: spatial, 3: frames, 4: 1}[i] for i in kept)
        macs = (positions * channels * quarter      # omega1
                + 2 * rows * quarter * positions     # logits and aggregation
                + positions * fused_in * channels)   # omega2
        return params, macs

    def _bme_counts(self, frames: int, height: int, width: int, channels: int) -> Tuple[int, int]:
        half = channels // 2
        directions = 2 if self.config.bme_direction == "bi" else 1
        positions, spatial = frames * height * width, height * width
        upsilon_in = half * directions
        params = 2 * (channels * half + half) + (upsilon_in * channels + channels)
        if self.config.bme_manner == "local":
            projections = 2 * positions * channels * half
            pairing = directions * frames * (2 * spatial * spatial * half + spatial * half)
        else:
            projections = frames * channels * half + positions * channels * half
            pairing = directions * positions * half
        return params, projections + pairing + positions * upsilon_in * channels

    def to_frame(self, report: ComplexityReport) -> pd.DataFrame:
        """Breakdown table with one row per component"""
        rows = [{"component": name, "params": p, "macs": m} for name, (p, m) in report.components.items()]
        return pd.DataFrame(rows, columns=["component", "params", "macs"])


def count_params_and_macs(config: BackboneConfig, frames: int = 8) -> Tuple[int, int]:
    """Exact parameter count and per-clip multiply-accumulate count"""
    report = ComplexityCalculator(config).calculate(frames=frames)
    return report.param_count, report.mac_count
