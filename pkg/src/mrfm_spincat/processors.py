"""Event emission around simulation service methods."""

import functools
import time
import traceback
from contextlib import contextmanager
from typing import Any


def _resolve_signal(service_instance, default_event_type: str):
    """Find ``(event_type, signal)`` from the service's ``Meta`` class, if any."""
    meta = getattr(service_instance.__class__, "Meta", None)
    event_type = getattr(meta, "event_type", default_event_type)

    signals = getattr(meta, "signal_manager", None)
    if signals is None:
        return event_type, None

    signal = getattr(signals, event_type, None)
    if signal is None and hasattr(signals, "signals"):
        signal = signals.signals.get(default_event_type)
    return event_type, signal


def _capture_state(service_instance, names) -> dict[str, Any]:
    """Read the listed attributes (``cls.`` prefix for class attributes)."""
    state: dict[str, Any] = {}
    for var_name in names or []:
        try:
            if var_name.startswith("cls."):
                attr_name = var_name[4:]
                if hasattr(service_instance.__class__, attr_name):
                    state[attr_name] = getattr(service_instance.__class__, attr_name)
            elif hasattr(service_instance, var_name):
                state[var_name] = getattr(service_instance, var_name)
        except Exception as e:
            state[f"{var_name}_error"] = f"Failed to capture: {str(e)}"
    return state


def _send(signal, event_type: str, sub_event: str, data: dict) -> None:
    # Event emission must never break the simulation
    try:
        signal.send(event_type=event_type, sub_event=sub_event, data=data)
    except Exception:
        pass


def _execute_with_events(func, service_instance, args, kwargs, data, metadata):
    """Execute function with automatic START/FINISH/ERROR event emission."""
    event_type, signal = _resolve_signal(service_instance, "lifecycle")
    if signal is None:
        return func(service_instance, *args, **kwargs)

    method_name = func.__name__.upper()
    start_time = time.perf_counter()
    initial_state = _capture_state(service_instance, data)
    _send(
        signal,
        event_type,
        f"{method_name}_START",
        {**initial_state, **metadata, "timestamp": time.time()},
    )

    try:
        result = func(service_instance, *args, **kwargs)
    except Exception as ex:
        error_data = {**initial_state, **metadata}
        error_data.update(
            {
                "error": str(ex),
                "error_type": type(ex).__name__,
                "traceback": traceback.format_exc(),
                "success": False,
                "duration_seconds": time.perf_counter() - start_time,
            }
        )
        _send(signal, event_type, f"{method_name}_ERROR", error_data)
        raise

    final_state = _capture_state(service_instance, data)
    _send(
        signal,
        event_type,
        f"{method_name}_FINISH",
        {
            **final_state,
            **metadata,
            "success": True,
            "duration_seconds": time.perf_counter() - start_time,
        },
    )
    return result


class EventProcessor:
    """Event processing decorators for automatic event emission"""

    @staticmethod
    def emits_event(data=None, **metadata):
        """
        Decorator for START/FINISH/ERROR event emission with state capture

        Args:
            data: List of attribute names to capture (supports 'cls.var' for class vars)
            **metadata: Additional metadata to include in all events
        """

        def decorator(func):
            @functools.wraps(func)
            def wrapper(self, *args, **kwargs):
                return _execute_with_events(func, self, args, kwargs, data, metadata)

            return wrapper

        return decorator

    @staticmethod
    def emit(service_instance, sub_event: str, data: dict | None = None) -> None:
        """Send one event on the service's configured signal.

        Used for progress notifications inside long-running methods; does
        nothing when the service has no signal manager.

        Args:
            service_instance: Object whose class carries a ``Meta``.
            sub_event: Event name, e.g. ``"PROPAGATE_PROGRESS"``.
            data: Payload dict.
        """
        event_type, signal = _resolve_signal(service_instance, "lifecycle")
        if signal is not None:
            _send(signal, event_type, sub_event, dict(data or {}))

    @staticmethod
    @contextmanager
    def context(signal_manager, event_type: str, data=None):
        """
        Context manager that emits lifecycle events around a code block.

        Emits ``<event_type>_START`` on entry, ``<event_type>_FINISH`` on clean
        exit, and ``<event_type>_ERROR`` (then re-raises) if an exception
        propagates.

        Args:
            signal_manager: Signal manager whose attribute named ``event_type``
                is a blinker signal.
            event_type: Signal name and event prefix.
            data: Optional dict included in every emitted event.

        Example::

            with EventProcessor.context(signals, "lifecycle", data={"run": "eta0.3"}):
                runner.run(cfg)
        """
        signal = getattr(signal_manager, event_type, None)
        event_data = dict(data or {})
        prefix = event_type.upper()

        if signal is not None:
            _send(signal, event_type, f"{prefix}_START", event_data)
        try:
            yield
        except Exception as ex:
            if signal is not None:
                _send(
                    signal,
                    event_type,
                    f"{prefix}_ERROR",
                    {**event_data, "error": str(ex), "error_type": type(ex).__name__},
                )
            raise
        else:
            if signal is not None:
                _send(signal, event_type, f"{prefix}_FINISH", event_data)
