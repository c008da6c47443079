"""Tests for event processors."""

from enum import Enum

import pytest

from mrfm_spincat import BaseSignalManager, EventProcessor


class StageEventTypes(Enum):
    """Event types used by the test services."""

    LIFECYCLE_EVENT = "lifecycle_event"
    PROPAGATION_EVENT = "propagation_event"


class FreshSignalManager(BaseSignalManager):
    """Signal manager with a fresh instance per call (no singleton)."""

    def __new__(cls):
        return object.__new__(cls)

    def __init__(self):
        self.signals: dict = {}
        self.setup_custom_signals({"lifecycle": StageEventTypes, "propagation": StageEventTypes})


@pytest.fixture
def signals(event_receiver):
    manager = FreshSignalManager()
    manager.propagation = event_receiver
    manager.lifecycle = event_receiver
    return manager


class TestEmitsEvent:
    """Tests for the START/FINISH/ERROR decorator."""

    def test_start_and_finish(self, signals, received_events):
        class Stepper:
            class Meta:
                event_type = "propagation"
                signal_manager = signals

            def __init__(self):
                self.steps_taken = 0

            @EventProcessor.emits_event(data=["steps_taken"])
            def advance(self, n):
                self.steps_taken += n
                return self.steps_taken

        assert Stepper().advance(5) == 5
        assert [e["sub_event"] for e in received_events] == ["ADVANCE_START", "ADVANCE_FINISH"]
        assert received_events[0]["event_type"] == "propagation"
        assert received_events[0]["data"]["steps_taken"] == 0
        assert received_events[1]["data"]["steps_taken"] == 5
        assert received_events[1]["data"]["success"] is True
        assert received_events[1]["data"]["duration_seconds"] >= 0.0

    def test_metadata(self, signals, received_events):
        class Service:
            class Meta:
                event_type = "propagation"
                signal_manager = signals

            @EventProcessor.emits_event(method="split-step", order=2)
            def propagate(self):
                return "done"

        Service().propagate()
        assert received_events[0]["data"]["method"] == "split-step"
        assert received_events[1]["data"]["order"] == 2
        assert "timestamp" in received_events[0]["data"]

    def test_error_event_and_reraise(self, signals, received_events):
        class Service:
            class Meta:
                event_type = "propagation"
                signal_manager = signals

            @EventProcessor.emits_event()
            def failing_step(self):
                raise ArithmeticError("norm blew up")

        with pytest.raises(ArithmeticError):
            Service().failing_step()

        assert [e["sub_event"] for e in received_events] == [
            "FAILING_STEP_START",
            "FAILING_STEP_ERROR",
        ]
        data = received_events[1]["data"]
        assert data["error"] == "norm blew up"
        assert data["error_type"] == "ArithmeticError"
        assert data["success"] is False
        assert "Traceback" in data["traceback"]

    def test_without_meta(self):
        class Service:
            @EventProcessor.emits_event()
            def method(self):
                return "works"

        assert Service().method() == "works"

    def test_class_variable_capture(self, signals, received_events):
        class Service:
            grid_points = 4096

            class Meta:
                event_type = "propagation"
                signal_manager = signals

            @EventProcessor.emits_event(data=["cls.grid_points", "missing"])
            def run(self):
                pass

        Service().run()
        assert received_events[0]["data"]["grid_points"] == 4096
        assert "missing" not in received_events[0]["data"]

    def test_unknown_event_type_falls_back_to_lifecycle(self, signals, received_events):
        class Service:
            class Meta:
                event_type = "telemetry"
                signal_manager = signals

            @EventProcessor.emits_event()
            def run(self):
                pass

        Service().run()
        assert len(received_events) == 2
        assert received_events[0]["event_type"] == "telemetry"

    def test_failing_receiver_does_not_break_service(self):
        manager = FreshSignalManager()

        def broken(_sender, **_kwargs):
            raise RuntimeError("receiver failed")

        manager.propagation.connect(broken)

        class Service:
            class Meta:
                event_type = "propagation"
                signal_manager = manager

            @EventProcessor.emits_event()
            def run(self):
                return 42

        assert Service().run() == 42


class TestEmit:
    """Tests for single progress events."""

    def test_emit_progress(self, signals, received_events):
        class Service:
            class Meta:
                event_type = "propagation"
                signal_manager = signals

        EventProcessor.emit(Service(), "PROPAGATE_PROGRESS", {"tau": 0.5})
        assert received_events == [
            {
                "sender": None,
                "event_type": "propagation",
                "sub_event": "PROPAGATE_PROGRESS",
                "data": {"tau": 0.5},
            }
        ]

    def test_emit_without_meta(self, received_events):
        EventProcessor.emit(object(), "PROPAGATE_PROGRESS", {"tau": 0.5})
        assert received_events == []


class TestContextManager:
    """Tests for EventProcessor.context."""

    def test_happy_path(self, signals, received_events):
        with EventProcessor.context(signals, "lifecycle", data={"member": "run_000"}):
            pass
        assert [e["sub_event"] for e in received_events] == ["LIFECYCLE_START", "LIFECYCLE_FINISH"]
        assert all(e["data"]["member"] == "run_000" for e in received_events)

    def test_exception_emits_error_and_reraises(self, signals, received_events):
        with pytest.raises(ValueError, match="bad member"):
            with EventProcessor.context(signals, "lifecycle"):
                raise ValueError("bad member")
        assert received_events[-1]["sub_event"] == "LIFECYCLE_ERROR"
        assert received_events[-1]["data"]["error_type"] == "ValueError"

    def test_missing_signal(self, signals, received_events):
        with EventProcessor.context(signals, "telemetry"):
            pass
        assert received_events == []
