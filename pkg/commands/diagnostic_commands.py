import os
from typing import Optional

import pandas as pd

from commands.training_commands import model_from_checkpoint
from config.settings import ConfigManager
from core.base_classes import BaseCommand
from core.exceptions import ConfigError
from core.tensor import resolve_dtype
from services.gradcheck_service import GradcheckService
from services.inspect_service import InspectionService, load_clip
from services.training_service import LATEST
from utils.console import render_table
from utils.data_handler import CheckpointHandler, LsttTensorHandler

GRADIENT_FAILURE = 3


class GradcheckCommand(BaseCommand):
    """Runs every finite-difference suite at f64 and prints a pass/fail table"""

    def __init__(self, config_manager: ConfigManager, corrupt: Optional[str] = None,
                 skip_network: bool = False):
        self._config = config_manager
        self.corrupt = corrupt
        self.skip_network = skip_network

    @property
    def title(self) -> str:
        return "Gradient check"

    def _execute(self) -> int:
        c = self._config.get_run_config()
        service = GradcheckService(seeds=c.gradcheck_seeds, epsilon=c.gradcheck_epsilon,
                                   tolerance=c.gradcheck_tolerance,
                                   network_tolerance=c.gradcheck_network_tolerance, corrupt=self.corrupt)
        table = service.run(include_network=not self.skip_network)
        render_table(table)
        return 0 if bool(table["passed"].all()) else GRADIENT_FAILURE


class InspectCommand(BaseCommand):
    """Dumps dependency matrices and motion maps of one clip"""

    def __init__(self, config_manager: ConfigManager, checkpoint_handler: CheckpointHandler,
                 tensor_handler: LsttTensorHandler, clip: Optional[str] = None,
                 checkpoint: Optional[str] = None, output: Optional[str] = None):
        self._config = config_manager
        self._checkpoints = checkpoint_handler
        self._tensors = tensor_handler
        self.clip = clip
        self.checkpoint = checkpoint
        self.output = output

    @property
    def title(self) -> str:
        return "Inspect"

    def _validate(self) -> None:
        if not self.clip:
            raise ConfigError("inspect needs --clip")
        ConfigManager.validate_paths(self.clip)

    def _execute(self) -> int:
        config = self._config.get_run_config()
        path = self.checkpoint or os.path.join(config.checkpoint_dir, LATEST)
        model = model_from_checkpoint(self._config, path, self._checkpoints)
        clip = load_clip(self.clip, self._tensors, resolve_dtype(config.precision))
        output = self.output or os.path.join(config.output_dir, "inspect")
        written = InspectionService(model, self._tensors).dump(clip, output)
        render_table(pd.DataFrame({"file": written}))
        return 0
