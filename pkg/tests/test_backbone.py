"""Encoder shapes, residual insertion and complexity accounting."""
from dataclasses import replace

import numpy as np
import pytest

from core.exceptions import ConfigError, DataError, DimensionError
from core.tensor import OpCounter
from models.backbone import VARIANTS, BackboneConfig
from services.backbone_service import ComplexityCalculator, VideoReIDModel, count_params_and_macs
from services.training_service import model_state, restore_state


def test_default_layout_shapes(rng):
    model = VideoReIDModel(BackboneConfig(), seed=0)
    clip = rng.uniform(0, 1, size=(8, 64, 32, 3)).astype(np.float32)
    stages, embedding = model.encode_clip(clip)
    assert [s.tensor.shape for s in stages] == [[8, 32, 16, 16], [8, 16, 8, 32], [8, 8, 4, 64], [8, 4, 2, 128]]
    assert embedding.vector.shape == [128]
    assert embedding.identity_logits.shape == [20]


def test_fresh_blocks_leave_the_embedding_untouched(rng, tiny_config):
    clip = rng.uniform(0, 1, size=(3, 16, 16, 3))
    baseline = VideoReIDModel(tiny_config.with_variant("baseline"), seed=4).embed(clip)
    full = VideoReIDModel(tiny_config.with_variant("+mae+bme"), seed=4).embed(clip)
    assert np.array_equal(baseline.vector.data, full.vector.data)
    assert np.array_equal(baseline.identity_logits.data, full.identity_logits.data)


def test_block_parameters_follow_closed_form():
    base = BackboneConfig(insert_mae_after=(), insert_bme_after=())
    c = 32
    params_base, _ = count_params_and_macs(base)
    params_mae, _ = count_params_and_macs(replace(base, insert_mae_after=(2,)))
    params_bme, _ = count_params_and_macs(replace(base, insert_bme_after=(2,)))
    assert params_mae - params_base == (c * c // 4 + c // 4) + (c * c + c)
    assert params_bme - params_base == 2 * (c * c // 2 + c // 2) + (c * c + c)


def test_variants_grow_in_cost():
    counts = [count_params_and_macs(BackboneConfig().with_variant(v)) for v in ("baseline", "+mae", "+mae+bme")]
    assert counts[0][0] < counts[1][0] < counts[2][0]
    assert counts[0][1] < counts[1][1] < counts[2][1]


@pytest.mark.parametrize("variant", sorted(VARIANTS))
def test_parameter_count_matches_model(tiny_config, variant):
    config = tiny_config.with_variant(variant)
    assert VideoReIDModel(config).parameter_count() == count_params_and_macs(config)[0]


@pytest.mark.parametrize("overrides", [
    {},
    {"bme_manner": "local"},
    {"bme_direction": "single"},
    {"mae_granularities": ("A1", "A4")},
    {"insert_mae_after": (1, 4), "insert_bme_after": (3,)},
])
def test_counted_multiplies_match_closed_form(rng, tiny_config, overrides):
    config = replace(tiny_config, **overrides)
    with OpCounter() as counter:
        VideoReIDModel(config).embed(rng.uniform(0, 1, size=(3, 16, 16, 3)))
    assert counter.total() == count_params_and_macs(config, frames=3)[1]


def test_complexity_breakdown_table(tiny_config):
    calculator = ComplexityCalculator(tiny_config)
    frame = calculator.to_frame(calculator.calculate(frames=2))
    assert list(frame["component"]) == ["stage1.conv", "stage2.conv", "stage2.mae", "stage2.bme",
                                        "stage3.conv", "stage3.mae", "stage3.bme", "stage4.conv", "classifier"]


def test_parameter_names_are_sorted(tiny_config):
    names = list(VideoReIDModel(tiny_config).parameters())
    assert names == sorted(names)
    assert "stage2.mae.omega1.weight" in names
    assert "stage3.bme.upsilon.bias" in names
    assert "classifier.weight" in names


def test_temporal_order_is_ignored_without_motion(rng, randomize, tiny_config):
    model = VideoReIDModel(tiny_config.with_variant("+mae"))
    randomize(model.parameters(), rng, -0.3, 0.3)
    clip = rng.uniform(0, 1, size=(4, 16, 16, 3))
    shuffled = clip[[3, 1, 0, 2]]
    np.testing.assert_allclose(model.embed(clip).vector.data, model.embed(shuffled).vector.data, atol=1e-10)


def test_temporal_order_matters_with_motion(rng, randomize, tiny_config):
    model = VideoReIDModel(tiny_config.with_variant("+mae+bme"))
    randomize(model.parameters(), rng, -0.3, 0.3)
    clip = rng.uniform(0, 1, size=(4, 16, 16, 3))
    shuffled = clip[[3, 1, 0, 2]]
    difference = np.abs(model.embed(clip).vector.data - model.embed(shuffled).vector.data).max()
    assert difference > 1e-6


def test_constant_clip_matches_single_frame(rng, randomize, tiny_config):
    model = VideoReIDModel(tiny_config.with_variant("+mae"))
    randomize(model.parameters(), rng, -0.3, 0.3)
    frame = rng.uniform(0, 1, size=(1, 16, 16, 3))
    np.testing.assert_allclose(model.embed(np.repeat(frame, 4, axis=0)).vector.data,
                               model.embed(frame).vector.data, atol=1e-10)


def test_load_state_round_trip(rng, tiny_config):
    source, target = VideoReIDModel(tiny_config, seed=1), VideoReIDModel(tiny_config, seed=2)
    target.load_state({name: p.value.data for name, p in source.parameters().items()})
    clip = rng.uniform(0, 1, size=(2, 16, 16, 3))
    assert np.array_equal(source.embed(clip).vector.data, target.embed(clip).vector.data)


def test_load_state_rejects_missing_and_misshapen(tiny_config):
    model = VideoReIDModel(tiny_config)
    arrays = {name: p.value.data for name, p in model.parameters().items()}
    with pytest.raises(DataError, match="classifier.bias"):
        model.load_state({k: v for k, v in arrays.items() if k != "classifier.bias"})
    arrays["classifier.bias"] = np.zeros(7)
    with pytest.raises(DataError):
        model.load_state(arrays)


def test_load_state_rejects_parameters_of_another_variant(tiny_config):
    source = VideoReIDModel(tiny_config.with_variant("+mae+bme"), seed=1)
    target = VideoReIDModel(tiny_config.with_variant("baseline"), seed=2)
    with pytest.raises(DataError, match="bme"):
        target.load_state({name: p.value.data for name, p in source.parameters().items()})
    with pytest.raises(DataError, match="mae"):
        restore_state(target, model_state(source, epoch=3))


def test_load_state_skips_optimizer_entries(tiny_config):
    source, target = VideoReIDModel(tiny_config, seed=1), VideoReIDModel(tiny_config, seed=2)
    source.parameters()["classifier.bias"].step_count = 5
    assert restore_state(target, model_state(source, epoch=3)) == 3
    assert target.parameters()["classifier.bias"].step_count == 5
    for name, param in source.parameters().items():
        np.testing.assert_array_equal(target.parameters()[name].value.data, param.value.data)


@pytest.mark.parametrize("shape, error", [
    ((2, 16, 16), DimensionError),
    ((2, 16, 16, 1), DimensionError),
    ((2, 8, 16, 3), ConfigError),
    ((1, 16, 16, 3), ConfigError),
])
def test_bad_clips_are_rejected(tiny_config, shape, error):
    with pytest.raises(error):
        VideoReIDModel(tiny_config).embed(np.zeros(shape))


@pytest.mark.parametrize("overrides", [
    {"stage_channels": (4, 6, 8, 8)},
    {"stage_channels": (4, 4, 4)},
    {"input_hw": (24, 16)},
    {"insert_mae_after": (5,)},
    {"precision": "f16"},
])
def test_invalid_layouts_are_rejected(overrides):
    with pytest.raises(ConfigError):
        BackboneConfig(**overrides)
