"""Ablation grids, block taps and desk-scale training runs."""
import pytest

from config.settings import RunConfig
from core.exceptions import ConfigError, DataError
from main import main
from services.ablation_service import AblationService, grid_variants
from services.backbone_service import VideoReIDModel
from services.inspect_service import InspectionService, dump_name, load_clip
from utils.data_handler import LsttTensorHandler, ReportHandler


def test_module_grid():
    variants = grid_variants("modules", RunConfig())
    assert list(variants) == ["baseline", "+mae", "+bme", "+mae+bme"]
    assert variants["+bme"].insert_mae_after == () and variants["+bme"].insert_bme_after == (2, 3)


def test_granularity_grid_disables_motion():
    variants = grid_variants("granularity", RunConfig())
    assert list(variants) == ["all", "-A1", "-A2", "-A3", "-A4"]
    assert variants["-A2"].mae_granularities == ("A1", "A3", "A4")
    assert all(v.insert_bme_after == () for v in variants.values())


def test_motion_grid_disables_appearance():
    variants = grid_variants("motion", RunConfig())
    assert set(variants) == {"global/single", "global/bi", "local/single", "local/bi"}
    assert variants["local/single"].bme_manner == "local"
    assert all(v.insert_mae_after == () for v in variants.values())


def test_unknown_grid():
    with pytest.raises(ConfigError):
        grid_variants("depth", RunConfig())


def test_service_tabulates_seeds_and_means(tmp_path):
    seen = []

    def fake_run(config, run_dir):
        seen.append((config.seed, run_dir))
        return {"R1": 0.5 + 0.1 * (config.seed - 3), "R5": 1.0, "mAP": 0.4, "params": 10, "macs": 20}

    table = AblationService(fake_run, str(tmp_path), ReportHandler()).run("modules", RunConfig(seed=3), seeds=2)
    assert len(seen) == 8
    assert seen[0][1].endswith("seed3")
    means = table.loc[table["seed"] == "mean"]
    assert list(means["variant"]) == ["baseline", "+mae", "+bme", "+mae+bme"]
    assert means["R1"].tolist() == pytest.approx([0.55] * 4)
    assert (tmp_path / "ablation_modules.tsv").exists()


def test_capture_names_and_dump(tmp_path, rng, tiny_config):
    service = InspectionService(VideoReIDModel(tiny_config))
    maps = service.capture(rng.uniform(0, 1, size=(3, 16, 16, 3)))
    assert sorted(maps) == ["stage2.D1", "stage2.D2", "stage2.D3", "stage2.D4", "stage2.Mb", "stage2.Mf",
                            "stage3.D1", "stage3.D2", "stage3.D3", "stage3.D4", "stage3.Mb", "stage3.Mf"]
    assert dump_name("stage3.Mb") == "stage3_Mb.lst"
    written = service.dump(rng.uniform(0, 1, size=(3, 16, 16, 3)), str(tmp_path))
    assert len(written) == 12
    assert LsttTensorHandler().load_data(str(tmp_path / "stage2_Mf.lst")).shape == (3, 4, 4, 2)
    with pytest.raises(DataError):
        load_clip(str(tmp_path / "stage2_D1.lst"), LsttTensorHandler())


def desk_paths(root):
    paths = {"dataset_root": root / "data", "output_dir": root / "run", "checkpoint_dir": root / "run" / "checkpoints"}
    args = []
    for key, value in paths.items():
        args += ["--set", f"{key}={value}"]
    return args


@pytest.mark.slow
def test_desk_defaults_reach_rank1_of_ninety_percent(tmp_path):
    args = desk_paths(tmp_path)
    assert main(["generate", *args]) == 0
    assert main(["train", "--variant", "+mae+bme", *args]) == 0
    assert main(["eval", "--variant", "+mae+bme", *args]) == 0
    report = ReportHandler().load_key_values(str(tmp_path / "run" / "eval_report.txt"))
    assert int(report["valid"]) == 20
    assert float(report["R1"]) >= 0.90


@pytest.mark.slow
def test_module_ablation_orders_rank1_over_three_seeds(tmp_path):
    args = desk_paths(tmp_path)
    assert main(["generate", *args]) == 0
    assert main(["ablate", "--grid", "modules", "--seeds", "3", *args]) == 0
    table = ReportHandler().load_data(str(tmp_path / "run" / "ablation_modules.tsv"))
    means = table.loc[table["seed"].astype(str) == "mean"].set_index("variant")["R1"].astype(float)
    assert means["baseline"] <= means["+mae"] <= means["+mae+bme"]
    assert means["+mae+bme"] >= 0.90
