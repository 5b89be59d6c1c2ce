import logging
from abc import abstractmethod
from typing import Any, Dict, Optional

from core.exceptions import ContractError, LstrlError
from core.interfaces import ICalculator, ICommand, IFeatureBlock
from core.tensor import DenseTensor
from models.features import FrameFeatureBlock

logger = logging.getLogger(__name__)


class BaseCalculator(ICalculator):
    """Base class for calculators (Single Responsibility Principle)"""

    @abstractmethod
    def _validate_inputs(self, **kwargs) -> bool:
        """Validate calculation inputs"""
        pass

    @abstractmethod
    def _perform_calculation(self, **kwargs) -> Any:
        """Perform the actual calculation"""
        pass

    def calculate(self, **kwargs) -> Any:
        """Template method for calculations"""
        if not self._validate_inputs(**kwargs):
            raise ContractError(f"Invalid inputs for {type(self).__name__}")

        return self._perform_calculation(**kwargs)


class BaseFeatureBlock(IFeatureBlock):
    """Base class for plug-in blocks following Template Method pattern"""

    @abstractmethod
    def _validate_features(self, features: FrameFeatureBlock) -> None:
        """Raise if the block cannot process these features"""
        pass

    @abstractmethod
    def _forward(self, features: FrameFeatureBlock,
                 taps: Optional[Dict[str, DenseTensor]]) -> DenseTensor:
        """Compute the block output"""
        pass

    def forward(self, features: FrameFeatureBlock,
                taps: Optional[Dict[str, DenseTensor]] = None) -> DenseTensor:
        """Template method: validate, then run; intermediate maps go to ``taps`` when given"""
        self._validate_features(features)
        return self._forward(features, taps)


class BaseCommand(ICommand):
    """Base class for all commands following Template Method pattern"""

    @abstractmethod
    def _execute(self) -> int:
        """Do the command's work and return an exit code"""
        pass

    def _validate(self) -> None:
        """Override to check preconditions before executing"""
        pass

    def _render_header(self) -> None:
        """Render command header"""
        from utils.console import styled_title
        styled_title(self.title)

    def run(self) -> int:
        """Template method: header, validation, execution; errors become exit codes"""
        self._render_header()
        try:
            self._validate()
            return self._execute()
        except LstrlError as exc:
            logger.error("%s failed: %s", self.title, exc)
            return exc.exit_code
