"""
Dumps the dependency matrices D^i and motion maps M^f, M^b of one clip as portable tensors.
"""
import logging
import os
from typing import Dict, List

import numpy as np

from core.exceptions import DataError
from core.tensor import DenseTensor
from services.backbone_service import VideoReIDModel
from services.dataset_service import list_frames
from utils.data_handler import LsttTensorHandler

logger = logging.getLogger(__name__)


def load_clip(path: str, tensor_handler: LsttTensorHandler, dtype: type = np.float32) -> np.ndarray:
    """A tracklet directory of frame files, or one tensor file holding [T,H,W,3]"""
    if os.path.isdir(path):
        frames = list_frames(path)
        if not frames:
            raise DataError(f"No frame files in {path}")
        clip = np.stack([tensor_handler.load_data(f) for f in frames])
    else:
        clip = tensor_handler.load_data(path)
    if clip.ndim != 4 or clip.shape[3] != 3:
        raise DataError(f"Clip {path} has shape {list(clip.shape)}, expected [T,H,W,3]")
    return clip.astype(dtype)


def dump_name(tap_key: str) -> str:
    """'stage2.D1' -> 'stage2_D1.lst'"""
    stage, symbol = tap_key.split(".", 1)
    return f"{stage}_{symbol}.lst"


class InspectionService:
    """Runs one clip through the model and writes every tapped map"""

    def __init__(self, model: VideoReIDModel, tensor_handler: LsttTensorHandler = None):
        self.model = model
        self.tensor_handler = tensor_handler or LsttTensorHandler()

    def capture(self, clip: np.ndarray) -> Dict[str, DenseTensor]:
        maps: Dict[str, DenseTensor] = {}
        self.model.encode_clip(clip, taps=maps)
        return maps

    def dump(self, clip: np.ndarray, output_dir: str) -> List[str]:
        maps = self.capture(clip)
        if not maps:
            logger.warning("Model has no inserted blocks; nothing to dump")
        written = []
        for key in sorted(maps):
            path = os.path.join(output_dir, dump_name(key))
            self.tensor_handler.save_data(maps[key], path)
            written.append(path)
        logger.info("Wrote %d tensors to %s", len(written), output_dir)
        return written
