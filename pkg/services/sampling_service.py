"""
Clip sampling (restricted random sampling), identity-balanced PK batches and augmentation.
"""
import logging
import math
from typing import List, Optional, Tuple, Union

import numpy as np

from core.exceptions import ConfigError, DataError
from core.tensor import DenseTensor
from models.dataset import AugmentFlags, Batch, BatchSpec, Tracklet
from services.dataset_service import TrackletDataset

logger = logging.getLogger(__name__)

MODES = ("train", "eval")
ERASE_ATTEMPTS = 10


def rrs_indices(length: int, frames: int, mode: str = "eval",
                rng: Optional[np.random.Generator] = None) -> List[int]:
    """Frame indices chosen from a tracklet of ``length`` frames, one per chunk"""
    if frames <= 0:
        raise ConfigError(f"Number of sampled frames must be positive, got {frames}")
    if length < 1:
        raise DataError("Cannot sample from an empty tracklet")
    if mode not in MODES:
        raise ConfigError(f"Unknown sampling mode '{mode}', expected {MODES}")
    if length < frames:
        return [i % length for i in range(frames)]

    indices = []
    for chunk in range(frames):
        start = chunk * length // frames
        end = (chunk + 1) * length // frames
        if mode == "train":
            if rng is None:
                raise ConfigError("train-mode sampling needs a random generator")
            indices.append(int(rng.integers(start, end)))
        else:
            indices.append(start + (end - start) // 2)
    return indices


def rrs_sample(tracklet: Tracklet, frames: int, mode: str = "eval",
               rng: Optional[np.random.Generator] = None) -> List[str]:
    """Frame references of a T-frame clip drawn from ``tracklet``"""
    return [tracklet.frame_paths[i] for i in rrs_indices(len(tracklet), frames, mode, rng)]


def pad_and_crop(clip: np.ndarray, padding: int, offset: Tuple[int, int]) -> np.ndarray:
    """Zero-pad H and W by ``padding`` then cut an HxW window at ``offset`` (same for all frames)"""
    _, height, width, _ = clip.shape
    dy, dx = offset
    if not (0 <= dy <= 2 * padding and 0 <= dx <= 2 * padding):
        raise ConfigError(f"Crop offset {offset} outside [0, {2 * padding}]")
    padded = np.pad(clip, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    return padded[:, dy:dy + height, dx:dx + width, :]


def erase_rectangle(frame: np.ndarray, box: Tuple[int, int, int, int], fill: np.ndarray) -> np.ndarray:
    """Copy of ``frame`` [H,W,3] with box (top, left, height, width) set to ``fill``"""
    top, left, h, w = box
    out = frame.copy()
    out[top:top + h, left:left + w, :] = fill
    return out


def _erase_box(height: int, width: int, flags: AugmentFlags,
               rng: np.random.Generator) -> Optional[Tuple[int, int, int, int]]:
    area = height * width
    low, high = flags.erase_aspect
    for _ in range(ERASE_ATTEMPTS):
        target = rng.uniform(flags.erase_min_area, flags.erase_max_area) * area
        aspect = math.exp(rng.uniform(math.log(low), math.log(high)))
        h = math.floor(math.sqrt(target * aspect))
        w = math.floor(math.sqrt(target / aspect))
        if 0 < h <= height and 0 < w <= width and h * w <= flags.erase_max_area * area:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            return top, left, h, w
    return None


def augment(clip: Union[np.ndarray, DenseTensor], rng: np.random.Generator,
            flags: AugmentFlags) -> Union[np.ndarray, DenseTensor]:
    """Random crop (one offset per clip) then per-frame random erasing; shape is preserved"""
    as_dense = isinstance(clip, DenseTensor)
    out = np.array(clip.data if as_dense else clip, copy=True)
    if out.ndim != 4 or out.shape[3] != 3:
        raise DataError(f"augment expects a [T,H,W,3] clip, got {list(out.shape)}")
    frames, height, width, _ = out.shape

    if flags.crop and flags.padding > 0:
        offset = tuple(int(v) for v in rng.integers(0, 2 * flags.padding + 1, size=2))
        out = pad_and_crop(out, flags.padding, offset)

    if flags.erase and flags.erase_probability > 0:
        fill = np.zeros(3, dtype=out.dtype) if flags.fill is None else np.asarray(flags.fill, dtype=out.dtype)
        for t in range(frames):
            if rng.random() >= flags.erase_probability:
                continue
            box = _erase_box(height, width, flags, rng)
            if box is not None:
                out[t] = erase_rectangle(out[t], box, fill)

    return DenseTensor(out) if as_dense else out


def pk_batch(dataset: TrackletDataset, spec: BatchSpec, rng: np.random.Generator,
             flags: Optional[AugmentFlags] = None, seed: int = 0) -> Batch:
    """P distinct train identities x K clips each, with contiguous class labels"""
    identities = dataset.train_identities
    if len(identities) < spec.num_identities:
        raise DataError(f"Batch needs {spec.num_identities} identities, train split has {len(identities)}")

    chosen = rng.choice(len(identities), size=spec.num_identities, replace=False)
    clips: List[np.ndarray] = []
    labels: List[int] = []
    for index in chosen:
        identity = identities[int(index)]
        tracklets = dataset.tracklets_of(identity)
        k = spec.clips_per_identity
        picks = rng.choice(len(tracklets), size=k, replace=len(tracklets) < k)
        for pick in picks:
            frames = rrs_sample(tracklets[int(pick)], spec.frames_per_clip, "train", rng)
            clip = dataset.load_clip(frames)
            if flags is not None:
                clip = augment(clip, rng, flags)
            clips.append(clip)
            labels.append(dataset.label_of(identity))
    return Batch(clips=clips, labels=labels, seed=seed)
