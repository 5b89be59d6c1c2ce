"""
Error hierarchy shared by every layer. Each class carries the CLI exit code it maps to.
"""
from typing import Optional


class LstrlError(Exception):
    """Base class for all pipeline errors"""

    exit_code: int = 2


class DimensionError(LstrlError, ValueError):
    """Raised when tensor shapes are incompatible with an operation"""


class ConfigError(LstrlError, ValueError):
    """Raised for invalid configuration values or unknown configuration keys"""


class DataError(LstrlError, ValueError):
    """Raised for dataset problems: missing splits, bad labels, too few identities"""


class ContractError(LstrlError):
    """Raised when an API is called outside its preconditions"""


class ProtocolError(LstrlError):
    """Raised when the retrieval protocol cannot be evaluated"""


class NumericalError(LstrlError):
    """Raised when NaN/Inf values appear in a forward pass or a training loss"""

    exit_code = 3

    def __init__(self, message: str, batch_seed: Optional[int] = None):
        if batch_seed is not None:
            message = f"{message} (batch seed {batch_seed})"
        super().__init__(message)
        self.batch_seed = batch_seed
