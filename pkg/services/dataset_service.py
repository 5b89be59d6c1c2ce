"""
Tracklet dataset on disk: root/<split>/<identity>/<camera>/<tracklet>/frame_<5 digits>.lst
"""
import logging
import os
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.exceptions import DataError
from models.dataset import SPLITS, Tracklet
from utils.data_handler import LsttTensorHandler

logger = logging.getLogger(__name__)

FRAME_SUFFIX = ".lst"


def _numeric_dirs(path: str) -> List[int]:
    try:
        names = os.listdir(path)
    except OSError as exc:
        raise DataError(f"Could not list {path}: {exc}")
    ids = []
    for name in names:
        if os.path.isdir(os.path.join(path, name)):
            if not name.isdigit():
                raise DataError(f"Unexpected directory '{name}' in {path}: labels must be integers")
            ids.append(int(name))
    return sorted(ids)


def frame_name(index: int) -> str:
    return f"frame_{index:05d}{FRAME_SUFFIX}"


def list_frames(directory: str) -> List[str]:
    """Frame files of one tracklet directory in temporal order"""
    try:
        names = sorted(n for n in os.listdir(directory) if n.startswith("frame_") and n.endswith(FRAME_SUFFIX))
    except OSError as exc:
        raise DataError(f"Could not list {directory}: {exc}")
    return [os.path.join(directory, n) for n in names]


class TrackletDataset:
    """Enumerates tracklets per split in sorted (identity, camera, tracklet) order and caches frames"""

    def __init__(self, root: str, tensor_handler: Optional[LsttTensorHandler] = None,
                 dtype: type = np.float32, cache: bool = True):
        if not os.path.isdir(root):
            raise DataError(f"Dataset root {root} does not exist")
        self.root = root
        self.dtype = dtype
        self.tensor_handler = tensor_handler or LsttTensorHandler()
        self._cache: Optional[Dict[str, np.ndarray]] = {} if cache else None
        self._tracklets: Dict[str, List[Tracklet]] = {}
        self._channel_mean: Optional[np.ndarray] = None

        for split in SPLITS:
            split_dir = os.path.join(root, split)
            if os.path.isdir(split_dir):
                self._tracklets[split] = self._scan_split(split, split_dir)
        if "train" not in self._tracklets:
            raise DataError(f"Dataset {root} has no train split")

        self.train_identities: List[int] = sorted({t.identity_id for t in self._tracklets["train"]})
        self._labels = {identity: label for label, identity in enumerate(self.train_identities)}
        logger.info("Loaded dataset %s: %s", root,
                    ", ".join(f"{s}={len(ts)}" for s, ts in self._tracklets.items()))

    def _scan_split(self, split: str, split_dir: str) -> List[Tracklet]:
        tracklets = []
        for identity in _numeric_dirs(split_dir):
            identity_dir = os.path.join(split_dir, str(identity))
            for camera in _numeric_dirs(identity_dir):
                camera_dir = os.path.join(identity_dir, str(camera))
                for tracklet_id in _numeric_dirs(camera_dir):
                    frames = list_frames(os.path.join(camera_dir, str(tracklet_id)))
                    tracklets.append(Tracklet(identity, camera, frames, tracklet_id, split))
        return tracklets

    @property
    def splits(self) -> List[str]:
        return list(self._tracklets)

    @property
    def num_classes(self) -> int:
        return len(self.train_identities)

    def tracklets(self, split: str) -> List[Tracklet]:
        if split not in self._tracklets:
            raise DataError(f"Dataset {self.root} has no '{split}' split")
        return self._tracklets[split]

    def identities(self, split: str = "train") -> List[int]:
        return sorted({t.identity_id for t in self.tracklets(split)})

    def tracklets_of(self, identity: int, split: str = "train") -> List[Tracklet]:
        return [t for t in self.tracklets(split) if t.identity_id == identity]

    def label_of(self, identity: int) -> int:
        """Contiguous class label of a train identity"""
        try:
            return self._labels[identity]
        except KeyError:
            raise DataError(f"Identity {identity} is not in the train split")

    def load_frame(self, path: str) -> np.ndarray:
        if self._cache is not None and path in self._cache:
            return self._cache[path]
        frame = self.tensor_handler.load_data(path)
        if frame.ndim != 3 or frame.shape[2] != 3:
            raise DataError(f"Frame {path} has shape {list(frame.shape)}, expected [H,W,3]")
        frame = frame.astype(self.dtype, copy=False)
        if self._cache is not None:
            self._cache[path] = frame
        return frame

    def load_clip(self, frame_paths: Sequence[str]) -> np.ndarray:
        """Stack frames into a [T,H,W,3] array"""
        frames = [self.load_frame(p) for p in frame_paths]
        shapes = {f.shape for f in frames}
        if len(shapes) != 1:
            raise DataError(f"Frames of one clip differ in shape: {sorted(shapes)}")
        return np.stack(frames)

    @property
    def frame_hw(self):
        first = self.tracklets("train")[0]
        return tuple(self.load_frame(first.frame_paths[0]).shape[:2])

    def channel_mean(self) -> np.ndarray:
        """Per-channel mean over every train frame (random-erasing fill)"""
        if self._channel_mean is None:
            total = np.zeros(3, dtype=np.float64)
            count = 0
            for tracklet in self.tracklets("train"):
                for path in tracklet.frame_paths:
                    frame = self.load_frame(path)
                    total += frame.reshape(-1, 3).sum(axis=0, dtype=np.float64)
                    count += frame.shape[0] * frame.shape[1]
            self._channel_mean = (total / max(count, 1)).astype(self.dtype)
        return self._channel_mean
