import numpy as np
import pytest

from models.backbone import BackboneConfig
from models.dataset import SynthConfig
from services.dataset_service import TrackletDataset
from services.synthetic_service import generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """Four 4-channel stages on 16x16 frames with both blocks after stages 2 and 3"""
    return BackboneConfig(stage_channels=(4, 4, 4, 4), input_hw=(16, 16), num_identities=4, precision="f64")


@pytest.fixture
def tiny_synth():
    return SynthConfig(num_identities=4, tracklets_per_identity=4, frames_per_tracklet=6, palette_size=2,
                       frame_hw=(16, 16), rng_seed=5)


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic")
    config = SynthConfig(num_identities=4, tracklets_per_identity=4, frames_per_tracklet=6, palette_size=2,
                         frame_hw=(16, 16), rng_seed=5)
    generate_synthetic(config, str(root), force=True, progress=False)
    return str(root)


@pytest.fixture
def dataset(synthetic_root):
    return TrackletDataset(synthetic_root)


@pytest.fixture
def randomize():
    """Overwrite every parameter with uniform noise (zero-initialized layers included)"""
    def _randomize(params, rng, low=-0.5, high=0.5):
        for param in params.values():
            param.value.data[...] = rng.uniform(low, high, size=param.shape)
    return _randomize
