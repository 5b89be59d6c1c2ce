"""
Ablation grids: train and evaluate each variant for several seeds and tabulate the results.
"""
import logging
import os
from dataclasses import replace
from typing import Dict, List

import pandas as pd

from config.settings import RunConfig
from core.exceptions import ConfigError
from models.backbone import VARIANTS
from models.features import GRANULARITIES

logger = logging.getLogger(__name__)


def grid_variants(grid: str, base: RunConfig) -> Dict[str, RunConfig]:
    """Named run configs of one grid: modules, granularity or motion"""
    if grid == "modules":
        variants = {}
        for name, (mae, bme) in VARIANTS.items():
            variants[name] = replace(base, insert_mae_after=mae, insert_bme_after=bme)
        return variants
    if grid == "granularity":
        variants = {"all": replace(base, insert_bme_after=(), mae_granularities=GRANULARITIES)}
        for removed in GRANULARITIES:
            kept = tuple(g for g in GRANULARITIES if g != removed)
            variants[f"-{removed}"] = replace(base, insert_bme_after=(), mae_granularities=kept)
        return variants
    if grid == "motion":
        return {f"{manner}/{direction}": replace(base, insert_mae_after=(), bme_manner=manner,
                                                 bme_direction=direction)
                for manner in ("global", "local") for direction in ("single", "bi")}
    raise ConfigError(f"Unknown ablation grid '{grid}', expected modules, granularity or motion")


class AblationService:
    """Runs a grid through a train-and-evaluate callable and aggregates per-variant means

    ``run_variant(config, output_dir)`` returns a dict with R1, R5, mAP, params and macs.
    """

    def __init__(self, run_variant, output_dir: str, report_handler=None):
        self.run_variant = run_variant
        self.output_dir = output_dir
        self.report_handler = report_handler

    def run(self, grid: str, base: RunConfig, seeds: int = 3) -> pd.DataFrame:
        if seeds < 1:
            raise ConfigError(f"seeds must be positive, got {seeds}")
        rows: List[Dict] = []
        for name, config in grid_variants(grid, base).items():
            for offset in range(seeds):
                seed = base.seed + offset
                run_dir = os.path.join(self.output_dir, f"ablation_{grid}", name.replace("/", "_"), f"seed{seed}")
                seeded = replace(config, seed=seed, output_dir=run_dir,
                                 checkpoint_dir=os.path.join(run_dir, "checkpoints"))
                logger.info("Ablation %s: variant %s seed %d", grid, name, seed)
                result = self.run_variant(seeded, run_dir)
                rows.append({"variant": name, "seed": seed, **result})

        table = pd.DataFrame(rows)
        means = table.drop(columns="seed").groupby("variant", sort=False).mean().reset_index()
        means.insert(1, "seed", "mean")
        table = pd.concat([table, means], ignore_index=True)
        if self.report_handler is not None:
            self.report_handler.save_data(table, os.path.join(self.output_dir, f"ablation_{grid}.tsv"))
        return table

