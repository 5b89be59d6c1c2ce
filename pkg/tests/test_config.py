"""Run configuration parsing, overrides and the config manager."""
import pytest

from config.settings import AppSettings, ConfigManager, RunConfig
from core.exceptions import ConfigError


def test_text_round_trip():
    config = RunConfig(seed=3, stage_channels=(8, 8, 16, 16), base_lr=1.5e-4, augment_erase=False,
                       mae_granularities=("A1", "A3"), synth_brightness=(0.9, 0.7, 0.5))
    assert RunConfig.parse(config.to_text()) == config


def test_comments_and_blank_lines_are_ignored():
    config = RunConfig.parse("# run\n\nseed = 4   # trailing\nbme_manner=local\n")
    assert config.seed == 4 and config.bme_manner == "local"


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="'learning_rate'"):
        RunConfig.parse("learning_rate = 0.1")


@pytest.mark.parametrize("text", ["seed 4", "seed = four", "augment_crop = maybe", "precision = f16"])
def test_malformed_values(text):
    with pytest.raises(ConfigError):
        RunConfig.parse(text)


def test_overrides_apply_on_top_of_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 1\ntotal_epochs = 5\n")
    config = ConfigManager().load(str(path), ["total_epochs=2", "eval_ranks=1,5,10"])
    assert (config.seed, config.total_epochs, config.eval_ranks) == (1, 2, (1, 5, 10))
    assert ConfigManager().get_run_config() is config


def test_cli_shortcuts():
    config = ConfigManager().load(None, [], seed=9, variant="+bme", ablate_granularity=["a2"],
                                  motion="local", direction="single")
    assert config.seed == 9
    assert config.insert_mae_after == () and config.insert_bme_after == (2, 3)
    assert config.mae_granularities == ("A1", "A3", "A4")
    assert (config.bme_manner, config.bme_direction) == ("local", "single")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        ConfigManager().load(str(tmp_path / "absent.cfg"))


def test_builders_follow_the_run_config():
    manager = ConfigManager()
    config = manager.load(None, ["seed=5", "frame_height=32", "frame_width=16", "synth_identities=6",
                                 "batch_identities=3", "augment_crop=false"])
    assert manager.synth_config().rng_seed == 5
    assert manager.synth_config().frame_hw == (32, 16)
    assert manager.batch_spec().batch_size == 3 * config.clips_per_identity
    assert manager.augment_flags().crop is False
    backbone = manager.backbone_config(6)
    assert backbone.input_hw == (32, 16) and backbone.num_identities == 6
    assert manager.eval_settings()["metric"] == "cosine"


def test_update_settings_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ConfigManager().update_settings(colour="blue")


def test_validate_paths(tmp_path):
    ConfigManager.validate_paths(str(tmp_path))
    with pytest.raises(ConfigError, match="nowhere"):
        ConfigManager.validate_paths(str(tmp_path / "nowhere"))


def test_app_settings_from_env(monkeypatch):
    monkeypatch.setenv("LSTRL_LOG_LEVEL", "debug")
    monkeypatch.setenv("LSTRL_PROGRESS", "off")
    settings = AppSettings.from_env()
    assert settings.log_level == "DEBUG" and settings.progress is False
