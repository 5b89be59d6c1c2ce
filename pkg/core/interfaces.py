"""
Core module containing interfaces shared by every layer
"""
from abc import ABC, abstractmethod
from typing import Any, Dict

from core.tensor import DenseTensor, ParamTensor


class IDataHandler(ABC):
    """Interface for data handling operations (Interface Segregation Principle)"""

    @abstractmethod
    def load_data(self, source: str) -> Any:
        """Load data from a source"""
        pass

    @abstractmethod
    def save_data(self, data: Any, destination: str) -> bool:
        """Save data to a destination"""
        pass


class ICalculator(ABC):
    """Interface for calculation operations (Single Responsibility Principle)"""

    @abstractmethod
    def calculate(self, **kwargs) -> Any:
        """Perform calculations and return results"""
        pass


class IFeatureBlock(ABC):
    """Interface for plug-in blocks that map a [T,H,W,C] feature stack to a residual"""

    @abstractmethod
    def forward(self, features: Any) -> DenseTensor:
        """Compute the block output for one clip"""
        pass

    @abstractmethod
    def parameters(self) -> Dict[str, ParamTensor]:
        """Return learnable tensors keyed by name"""
        pass

    @property
    @abstractmethod
    def kind(self) -> str:
        """Return the block kind, used in parameter names"""
        pass


class ICommand(ABC):
    """Interface for command-line commands (Single Responsibility Principle)"""

    @abstractmethod
    def run(self) -> int:
        """Run the command and return its exit code"""
        pass

    @property
    @abstractmethod
    def title(self) -> str:
        """Return the command title"""
        pass
