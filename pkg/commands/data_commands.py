from config.settings import ConfigManager
from core.base_classes import BaseCommand
from services.synthetic_service import generate_synthetic
from utils.console import render_table
from utils.data_handler import LsttTensorHandler


class GenerateCommand(BaseCommand):
    """Renders the synthetic dataset into ``dataset_root`` (Single Responsibility Principle)"""

    def __init__(self, config_manager: ConfigManager, tensor_handler: LsttTensorHandler, force: bool = False):
        self._config = config_manager
        self._tensors = tensor_handler
        self.force = force

    @property
    def title(self) -> str:
        return "Generate synthetic dataset"

    def _execute(self) -> int:
        config = self._config.get_run_config()
        counts = generate_synthetic(self._config.synth_config(), config.dataset_root, self._tensors,
                                    force=self.force, progress=self._config.get_app_settings().progress)
        render_table(counts)
        return 0
