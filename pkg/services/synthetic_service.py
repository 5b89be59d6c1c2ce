"""
Synthetic video-person generator.

A person is a torso rectangle over a legs rectangle on a flat background, plus a small
blob on the torso that either stands still or slides horizontally (wrapping at the torso
edges) while bobbing by one pixel. Colours come from a shared palette, motion from the
identity's MotionPattern, and every tracklet is rendered under the photometric
transform of its camera.
"""
import logging
import os
import shutil
from typing import Dict, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from core.exceptions import ConfigError
from models.dataset import SPLITS, SynthConfig, blob_size, torso_box
from services.dataset_service import frame_name
from utils.data_handler import LsttTensorHandler

logger = logging.getLogger(__name__)

BACKGROUND = 0.35


def palette_colours(config: SynthConfig) -> np.ndarray:
    """[palette_size, 3 parts (torso, legs, blob), 3 channels] in [0.1, 0.9]"""
    rng = np.random.default_rng([config.rng_seed, 7919])
    return rng.uniform(0.1, 0.9, size=(config.palette_size, 3, 3))


def render_frame(colours: np.ndarray, frame_hw: Tuple[int, int], dx: int, dy: int) -> np.ndarray:
    """Clean frame [H,W,3] with the blob shifted by dx columns (wrapped) and dy rows"""
    height, width = frame_hw
    top, bottom, left, right = torso_box(frame_hw)
    frame = np.full((height, width, 3), BACKGROUND, dtype=np.float64)
    frame[top:bottom, left:right] = colours[0]
    frame[bottom:height - height // 8, left:right] = colours[1]

    blob_h, blob_w = blob_size(frame_hw)
    span = right - left
    row = top + (bottom - top - blob_h) // 2 + dy
    columns = [left + (dx + c) % span for c in range(blob_w)]
    frame[row:row + blob_h, columns] = colours[2]
    return frame


def render_tracklet(config: SynthConfig, identity: int, tracklet: int,
                    photometric: bool = True) -> np.ndarray:
    """All frames [L,H,W,3] of one tracklet as float32"""
    rng = np.random.default_rng([config.rng_seed, identity, tracklet])
    colours = palette_colours(config)[config.palette_of(identity)]
    top, bottom, left, right = torso_box(config.frame_hw)
    start = int(rng.integers(0, right - left))
    pattern = config.motion_patterns[identity]

    frames = np.stack([render_frame(colours, config.frame_hw, *pattern.offset(start, t, right - left))
                       for t in range(config.frames_per_tracklet)])
    if photometric:
        frames = config.camera_transforms[config.camera_of(tracklet)].apply(frames, rng)
    return frames.astype(np.float32)


def _prepare_root(root: str, force: bool) -> None:
    if os.path.isdir(root) and os.listdir(root):
        if not force:
            raise ConfigError(f"Target directory {root} is not empty (use --force to overwrite)")
        logger.warning("Overwriting dataset splits in %s", root)
        for split in SPLITS:
            shutil.rmtree(os.path.join(root, split), ignore_errors=True)
    os.makedirs(root, exist_ok=True)


def generate_synthetic(config: SynthConfig, root: str, tensor_handler: LsttTensorHandler = None,
                       force: bool = False, progress: bool = True) -> pd.DataFrame:
    """Render the dataset under ``root`` and return per-split tracklet counts"""
    tensor_handler = tensor_handler or LsttTensorHandler()
    _prepare_root(root, force)

    counts: Dict[str, int] = {split: 0 for split in SPLITS}
    jobs = [(identity, tracklet) for identity in range(config.num_identities)
            for tracklet in range(config.tracklets_per_identity)]
    for identity, tracklet in tqdm(jobs, desc="generate", disable=not progress):
        split = config.split_of(tracklet)
        camera = config.camera_of(tracklet)
        directory = os.path.join(root, split, str(identity), str(camera), str(tracklet))
        for index, frame in enumerate(render_tracklet(config, identity, tracklet)):
            tensor_handler.save_data(frame, os.path.join(directory, frame_name(index)))
        counts[split] += 1

    logger.info("Generated %d identities, %d tracklets in %s", config.num_identities, len(jobs), root)
    return pd.DataFrame([{"split": s, "tracklets": n} for s, n in counts.items()])
