"""Bridges forwarding simulation signals to loguru or to an event log file."""

import json
from abc import ABC, abstractmethod
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Any

import numpy as np
from loguru import logger

from .managers import BaseSignalManager

EVENT_LOG_NAME = "events.jsonl"


class SignalBridgeABC(ABC):
    """Abstract base class for bridging blinker signals to a sink.

    Subclasses implement ``connect``/``disconnect`` (receiver wiring) and
    ``start``/``stop`` (sink lifecycle).
    """

    _manager: BaseSignalManager | None = None

    @abstractmethod
    def connect(self, signal_manager: BaseSignalManager) -> None:
        """Bind this bridge to every signal of ``signal_manager``."""
        ...

    @abstractmethod
    def disconnect(self) -> None:
        """Unbind this bridge from its signal manager."""
        ...

    @abstractmethod
    def start(self) -> None:
        """Open the sink."""
        ...

    @abstractmethod
    def stop(self) -> None:
        """Close the sink and release resources."""
        ...

    @property
    def is_connected(self) -> bool:
        """Return ``True`` if a signal manager is currently bound."""
        return self._manager is not None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()
        self.disconnect()
        return False


class _ReceiverBridge(SignalBridgeABC):
    """Shared receiver wiring: one bound method connected to every signal."""

    def connect(self, signal_manager: BaseSignalManager) -> None:
        if self._manager is not None:
            self.disconnect()
        for signal_obj in signal_manager.get_signals():
            signal_obj.connect(self._receive)
        self._manager = signal_manager

    def disconnect(self) -> None:
        if self._manager is None:
            return
        for signal_obj in self._manager.get_signals():
            signal_obj.disconnect(self._receive)
        self._manager = None

    @abstractmethod
    def _receive(self, sender, **kwargs) -> None: ...


class LoguruBridge(_ReceiverBridge):
    """Log every event: ``_ERROR`` at ERROR, ``_PROGRESS`` at DEBUG, else INFO."""

    def __init__(self):
        self._active = False

    def start(self) -> None:
        self._active = True

    def stop(self) -> None:
        self._active = False

    def _receive(self, sender, **kwargs) -> None:
        if not self._active:
            return
        sub_event = str(kwargs.get("sub_event", ""))
        data = kwargs.get("data") or {}
        if sub_event.endswith("_ERROR"):
            level = "ERROR"
        elif sub_event.endswith("_PROGRESS"):
            level = "DEBUG"
        else:
            level = "INFO"
        summary = " ".join(
            f"{key}={value}"
            for key, value in data.items()
            if key not in ("traceback", "timestamp")
        )
        logger.log(level, "[{}] {} {}", kwargs.get("event_type"), sub_event, summary)


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return str(value)


class EventLogBridge(_ReceiverBridge):
    """Write every event as one JSON line to ``<directory>/events.jsonl``.

    The file is truncated when the bridge starts, so it holds one run only.
    """

    def __init__(self, directory: str | Path):
        self.path = Path(directory) / EVENT_LOG_NAME
        self._handle: IO[str] | None = None
        self._paused = False
        self.events_written = 0

    def start(self) -> None:
        if self._handle is not None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open("w", encoding="utf-8")

    def stop(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    @contextmanager
    def paused(self) -> Iterator["EventLogBridge"]:
        """Drop the events emitted inside the block."""
        previous, self._paused = self._paused, True
        try:
            yield self
        finally:
            self._paused = previous

    def _receive(self, sender, **kwargs) -> None:
        if self._handle is None or self._paused:
            return
        record = {
            "event_type": kwargs.get("event_type"),
            "sub_event": kwargs.get("sub_event"),
            "data": kwargs.get("data") or {},
        }
        self._handle.write(json.dumps(record, default=_jsonable, sort_keys=True) + "\n")
        self._handle.flush()
        self.events_written += 1
