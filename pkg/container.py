import inspect
import logging
from typing import Any, Callable, Dict, Optional, Tuple, Type

from config.settings import ConfigManager
from utils.data_handler import CheckpointHandler, LsttTensorHandler, ReportHandler

logger = logging.getLogger(__name__)

SINGLETON = "singleton"
TRANSIENT = "transient"


class DIContainer:
    """Dependency Injection Container (Dependency Inversion Principle)

    Commands name what they need by constructor parameter (``config_manager``,
    ``tensor_handler``, ``checkpoint_handler``, ``report_handler``); the container
    resolves those names, and command options are passed through as keyword arguments.
    """

    def __init__(self):
        self._providers: Dict[str, Tuple[str, Callable[[], Any]]] = {}
        self._instances: Dict[str, Any] = {}

        self.register_singleton('config_manager', ConfigManager)
        self.register_service('tensor_handler', LsttTensorHandler)
        self.register_service('checkpoint_handler', CheckpointHandler)
        self.register_service('report_handler', ReportHandler)

    def register_service(self, name: str, provider: Callable[[], Any]) -> None:
        """A fresh instance per resolution"""
        self._providers[name] = (TRANSIENT, provider)
        self._instances.pop(name, None)

    def register_singleton(self, name: str, provider: Callable[[], Any]) -> None:
        """One shared instance, built on first use"""
        self._providers[name] = (SINGLETON, provider)
        self._instances.pop(name, None)

    def has(self, name: str) -> bool:
        return name in self._providers

    def get(self, name: str) -> Optional[Any]:
        if name not in self._providers:
            return None
        lifetime, provider = self._providers[name]
        if lifetime == TRANSIENT:
            return provider()
        if name not in self._instances:
            self._instances[name] = provider()
        return self._instances[name]

    def create_with_dependencies(self, class_type: Type, **kwargs) -> Any:
        """Instantiate ``class_type``; explicit kwargs win, then registered names, then defaults"""
        arguments = {}
        for name, param in inspect.signature(class_type.__init__).parameters.items():
            if name == 'self' or param.kind in (param.VAR_POSITIONAL, param.VAR_KEYWORD):
                continue
            if name in kwargs:
                arguments[name] = kwargs[name]
            elif self.has(name):
                arguments[name] = self.get(name)
            elif param.default is inspect.Parameter.empty:
                raise TypeError(f"Cannot resolve dependency '{name}' of {class_type.__name__}")
        logger.debug("Built %s with %s", class_type.__name__, sorted(arguments))
        return class_type(**arguments)


container = DIContainer()
