"""Signal managers for simulation lifecycle and progress events."""

from abc import ABC, abstractmethod
from collections.abc import Callable
from enum import Enum

from blinker import NamedSignal, Signal

from .enums import SimulationEventTypes


class SignalManagerABC(ABC):
    """Abstract base class for signal managers."""

    @abstractmethod
    def setup_custom_signals(self, signal_config: dict[str, type[Enum]]) -> None:
        """Setup signals based on provided enum configuration.

        Args:
            signal_config: Dictionary mapping signal names to their enum types
                          e.g., {'lifecycle': SimulationEventTypes}
        """
        pass


class BaseSignalManager(SignalManagerABC):
    """Base signal manager with common functionality."""

    _instance = None
    _signals_initialized = False

    def __new__(cls):
        """Singleton pattern implementation"""
        if cls.__dict__.get("_instance") is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        """Initialize singleton instance only once"""
        if not type(self).__dict__.get("_signals_initialized", False):
            self.signals: dict[str, Signal] = {}
            type(self)._signals_initialized = True

    def get_signals(self) -> list[Signal]:
        """Get all registered signals."""
        return list(self.signals.values())

    def setup_custom_signals(self, signal_config: dict[str, type[Enum]]) -> None:
        """Setup signals based on provided enum configuration.

        Each signal is named after the enum member whose value starts with the
        signal name (``propagation`` -> ``propagation_event``), falling back to
        the signal name itself.

        Args:
            signal_config: Dictionary mapping signal names to their enum types
        """
        for signal_name, enum_type in signal_config.items():
            if signal_name in self.signals:
                continue
            identifier = next(
                (
                    member.value
                    for member in enum_type
                    if str(member.value).startswith(signal_name)
                ),
                signal_name,
            )
            signal_obj = NamedSignal(identifier)
            self.signals[signal_name] = signal_obj
            self._create_signal_property(signal_name, signal_obj)

    def _create_signal_property(self, signal_name: str, signal_obj: Signal) -> None:
        """Create getter/setter properties for a signal."""

        def getter(_self):
            return signal_obj

        def setter(_self, receiver: Callable):
            signal_obj.connect(receiver)

        # Set the property on the class
        setattr(type(self), signal_name, property(getter, setter))


class SimulationSignalManager(BaseSignalManager):
    """Process-wide signals for propagation, analysis and output events."""

    SIGNAL_NAMES = ("lifecycle", "propagation", "analysis", "output")

    def __init__(self):
        super().__init__()
        self.setup_custom_signals(
            {name: SimulationEventTypes for name in self.SIGNAL_NAMES}
        )

    def disconnect_all(self) -> None:
        """Drop every connected receiver."""
        for signal_obj in self.signals.values():
            for receiver in list(signal_obj.receivers_for(None)):
                signal_obj.disconnect(receiver)
