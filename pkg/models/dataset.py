from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from core.exceptions import ConfigError, DataError

SPLITS: Tuple[str, ...] = ("train", "query", "gallery")


def torso_box(frame_hw: Tuple[int, int]) -> Tuple[int, int, int, int]:
    """(top, bottom, left, right) of the torso; the blob moves inside it"""
    height, width = frame_hw
    return height // 8, height // 2, width // 4, width - width // 4


def blob_size(frame_hw: Tuple[int, int]) -> Tuple[int, int]:
    height, _ = frame_hw
    _, _, left, right = torso_box(frame_hw)
    return max(2, height // 8), max(2, (right - left) // 4)


@dataclass
class Tracklet:
    """Frames of one person under one camera, in temporal order"""
    identity_id: int
    camera_id: int
    frame_paths: List[str]
    tracklet_id: int = 0
    split: str = "train"

    def __post_init__(self):
        if self.identity_id < 0 or self.camera_id < 0:
            raise DataError(f"Tracklet ids must be non-negative, got identity {self.identity_id} "
                            f"camera {self.camera_id}")
        if not self.frame_paths:
            raise DataError(f"Tracklet {self.identity_id}/{self.camera_id}/{self.tracklet_id} has no frames")

    def __len__(self) -> int:
        return len(self.frame_paths)


@dataclass
class BatchSpec:
    """Identity-balanced batch layout: P identities x K clips x T frames"""
    num_identities: int = 8
    clips_per_identity: int = 4
    frames_per_clip: int = 8
    frame_hw: Tuple[int, int] = (64, 32)

    def __post_init__(self):
        if self.num_identities < 1 or self.clips_per_identity < 1:
            raise ConfigError(f"Batch needs P >= 1 and K >= 1, got P={self.num_identities} "
                              f"K={self.clips_per_identity}")
        if self.frames_per_clip < 2:
            raise ConfigError(f"frames_per_clip must be at least 2, got {self.frames_per_clip}")

    @property
    def batch_size(self) -> int:
        return self.num_identities * self.clips_per_identity


@dataclass
class MotionPattern:
    """Horizontal blob velocity in pixels per frame and vertical bob period (0 = no bob)"""
    velocity: int
    bob_period: int = 0

    def offset(self, start: int, frame: int, span: int) -> Tuple[int, int]:
        """Blob (dx, dy) at ``frame``; dx wraps around inside ``span`` columns"""
        dx = (start + self.velocity * frame) % span
        dy = (frame // self.bob_period) % 2 if self.bob_period > 0 else 0
        return dx, dy


@dataclass
class CameraTransform:
    """Per-camera photometric change: brightness gain and additive Gaussian noise level"""
    brightness: float = 1.0
    noise: float = 0.0

    def apply(self, frames: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out = frames * self.brightness
        if self.noise > 0:
            out = out + rng.normal(0.0, self.noise, size=frames.shape)
        return np.clip(out, 0.0, 1.0)


@dataclass
class SynthConfig:
    """Synthetic video-person dataset description

    Identities 2j and 2j+1 share palette j. The blob of 2j stands still while the blob
    of 2j+1 slides one blob width per frame, so any single frame of one could belong to
    the other and only motion tells the pair apart.
    """
    num_identities: int = 20
    tracklets_per_identity: int = 4
    frames_per_tracklet: int = 16
    palette_size: int = 10
    frame_hw: Tuple[int, int] = (64, 32)
    num_cameras: int = 2
    noise: float = 0.02
    brightness: Tuple[float, ...] = (1.0, 0.85)
    rng_seed: int = 0
    motion_patterns: List[MotionPattern] = field(default_factory=list)
    camera_transforms: List[CameraTransform] = field(default_factory=list)

    def __post_init__(self):
        if self.num_identities < 2:
            raise ConfigError(f"Synthetic data needs at least 2 identities, got {self.num_identities}")
        if self.tracklets_per_identity < 3:
            raise ConfigError("Each identity needs at least 3 tracklets (train, query, gallery), "
                              f"got {self.tracklets_per_identity}")
        if self.frames_per_tracklet < 1 or self.palette_size < 1 or self.num_cameras < 1:
            raise ConfigError("frames_per_tracklet, palette_size and num_cameras must be positive")
        height, width = self.frame_hw
        if height < 16 or width < 8:
            raise ConfigError(f"Synthetic frames must be at least 16x8, got {self.frame_hw}")
        if not self.brightness:
            raise ConfigError("brightness needs at least one value")

        if not self.motion_patterns:
            self.motion_patterns = [self._default_motion(identity) for identity in range(self.num_identities)]
        if not self.camera_transforms:
            self.camera_transforms = [
                CameraTransform(brightness=self.brightness[cam % len(self.brightness)], noise=self.noise)
                for cam in range(self.num_cameras)]
        if len(self.motion_patterns) != self.num_identities:
            raise ConfigError(f"Expected {self.num_identities} motion patterns, got {len(self.motion_patterns)}")
        if len(self.camera_transforms) != self.num_cameras:
            raise ConfigError(f"Expected {self.num_cameras} camera transforms, got {len(self.camera_transforms)}")

    def _default_motion(self, identity: int) -> MotionPattern:
        if identity % 2 == 0:
            return MotionPattern(velocity=0)
        pair = identity // 2
        sign = 1 if pair % 2 == 0 else -1
        return MotionPattern(velocity=sign * blob_size(self.frame_hw)[1], bob_period=2 + pair % 3)

    def palette_of(self, identity: int) -> int:
        return (identity // 2) % self.palette_size

    def camera_of(self, tracklet: int) -> int:
        return tracklet % self.num_cameras

    def split_of(self, tracklet: int) -> str:
        """Tracklets 0..n-3 train, n-2 query, n-1 gallery"""
        n = self.tracklets_per_identity
        if tracklet == n - 2:
            return "query"
        if tracklet == n - 1:
            return "gallery"
        return "train"


@dataclass
class AugmentFlags:
    """Training-time augmentation switches and their parameters"""
    crop: bool = True
    erase: bool = True
    padding: int = 4
    erase_probability: float = 0.5
    erase_min_area: float = 0.02
    erase_max_area: float = 0.25
    erase_aspect: Tuple[float, float] = (0.3, 3.3)
    fill: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.padding < 0:
            raise ConfigError(f"crop padding must be non-negative, got {self.padding}")
        if not 0.0 <= self.erase_probability <= 1.0:
            raise ConfigError(f"erase_probability must lie in [0, 1], got {self.erase_probability}")
        if not 0.0 < self.erase_min_area <= self.erase_max_area <= 1.0:
            raise ConfigError(f"erase areas must satisfy 0 < min <= max <= 1, got "
                              f"{self.erase_min_area}, {self.erase_max_area}")
        low, high = self.erase_aspect
        if not 0 < low <= high:
            raise ConfigError(f"erase_aspect must be an increasing positive range, got {self.erase_aspect}")

    @classmethod
    def disabled(cls) -> 'AugmentFlags':
        return cls(crop=False, erase=False)


@dataclass
class Batch:
    """P*K clips [T,H,W,3] with their class labels and the seed that produced them"""
    clips: List[np.ndarray]
    labels: List[int]
    seed: int = 0

    def __post_init__(self):
        if len(self.clips) != len(self.labels):
            raise DataError(f"Batch has {len(self.clips)} clips but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.clips)
