"""End-to-end command-line runs on a tiny synthetic dataset."""
import os

import numpy as np
import pytest

from commands.data_commands import GenerateCommand
from container import DIContainer
from main import build_parser, main
from utils.data_handler import LsttTensorHandler


def tiny_settings(root):
    settings = {
        "dataset_root": os.path.join(root, "data"),
        "output_dir": os.path.join(root, "run"),
        "checkpoint_dir": os.path.join(root, "run", "checkpoints"),
        "frame_height": 16, "frame_width": 16, "stage_channels": "4,4,4,4",
        "synth_identities": 4, "synth_frames_per_tracklet": 6, "synth_palette_size": 2,
        "batch_identities": 2, "clips_per_identity": 2, "frames_per_clip": 2,
        "batches_per_epoch": 1, "total_epochs": 1, "eval_frames": 2,
    }
    args = []
    for key, value in settings.items():
        args += ["--set", f"{key}={value}"]
    return args


def read_tree(root):
    files = {}
    for directory, _, names in os.walk(root):
        for name in names:
            path = os.path.join(directory, name)
            with open(path, "rb") as handle:
                files[os.path.relpath(path, root)] = handle.read()
    return files


@pytest.fixture
def trained_run(tmp_path):
    args = tiny_settings(str(tmp_path))
    assert main(["generate", *args]) == 0
    assert main(["train", *args]) == 0
    return tmp_path, args


def test_parser_knows_every_command():
    parser = build_parser()
    for command in ("generate", "train", "eval", "ablate", "gradcheck"):
        assert parser.parse_args([command]).command == command
    assert parser.parse_args(["inspect", "--clip", "x"]).clip == "x"


def test_generate_refuses_to_overwrite(tmp_path):
    args = tiny_settings(str(tmp_path))
    assert main(["generate", *args]) == 0
    assert main(["generate", *args]) == 2
    assert main(["generate", "--force", *args]) == 0


def test_generate_is_seeded(tmp_path):
    trees = []
    for name, seed in (("a", "7"), ("b", "7"), ("c", "8")):
        args = tiny_settings(str(tmp_path / name))
        assert main(["generate", "--seed", seed, *args]) == 0
        trees.append(read_tree(tmp_path / name / "data"))
    assert trees[0] == trees[1]
    assert trees[0] != trees[2]


def test_unknown_config_key_exits_with_usage_error(tmp_path):
    assert main(["generate", "--set", "colour=blue"]) == 2


def test_train_eval_and_inspect(trained_run):
    root, args = trained_run
    checkpoints = root / "run" / "checkpoints"
    assert (checkpoints / "latest.ckpt").exists() and (checkpoints / "epoch_001.ckpt").exists()
    assert (root / "run" / "run_config.txt").exists()

    assert main(["eval", "--dump-embeddings", *args]) == 0
    report = (root / "run" / "eval_report.txt").read_text()
    assert report.startswith("R1=") and "mAP=" in report
    assert (root / "run" / "embeddings" / "query_embeddings.lst").exists()

    handler = LsttTensorHandler()
    static = np.repeat(np.random.default_rng(0).uniform(0, 1, size=(1, 16, 16, 3)), 4, axis=0)
    handler.save_data(static.astype(np.float32), str(root / "static.lst"))
    out = root / "maps"
    assert main(["inspect", "--clip", str(root / "static.lst"), "--out", str(out), *args]) == 0
    d1 = handler.load_data(str(out / "stage2_D1.lst"))
    np.testing.assert_allclose(d1.sum(axis=1), 1.0, atol=1e-5)
    np.testing.assert_allclose(handler.load_data(str(out / "stage2_Mf.lst")),
                               handler.load_data(str(out / "stage2_Mb.lst")), atol=1e-6)

    clip_dir = root / "data" / "query" / "0" / "0" / "2"
    assert main(["inspect", "--clip", str(clip_dir), "--out", str(root / "maps2"), *args]) == 0
    assert (root / "maps2" / "stage3_D4.lst").exists()


def test_resume_continues_training(trained_run):
    root, args = trained_run
    assert main(["train", "--resume", *args, "--set", "total_epochs=2"]) == 0
    assert (root / "run" / "checkpoints" / "epoch_002.ckpt").exists()


def test_eval_rejects_a_checkpoint_of_another_variant(trained_run):
    _, args = trained_run
    assert main(["eval", "--variant", "baseline", *args]) == 2


def test_eval_without_checkpoint(tmp_path):
    args = tiny_settings(str(tmp_path))
    assert main(["generate", *args]) == 0
    assert main(["eval", *args]) == 2


def test_corrupted_gradient_fails_the_check(capsys):
    assert main(["gradcheck", "--skip-network", "--corrupt", "matmul", "--set", "gradcheck_seeds=1"]) == 3
    assert "matmul" in capsys.readouterr().out


def test_gradient_check_passes(capsys):
    assert main(["gradcheck", "--skip-network", "--set", "gradcheck_seeds=1"]) == 0
    assert "bme_local" in capsys.readouterr().out


def test_container_injects_registered_handlers():
    di = DIContainer()
    command = di.create_with_dependencies(GenerateCommand, force=True)
    assert command.force is True
    assert isinstance(command._tensors, LsttTensorHandler)

    class NeedsSomething:
        def __init__(self, something):
            self.something = something

    with pytest.raises(TypeError, match="something"):
        di.create_with_dependencies(NeedsSomething)
