"""Pytest configuration and fixtures for mrfm_spincat tests."""

import math
from enum import Enum

import pytest
import yaml
from loguru import logger

from mrfm_spincat import DriveSchedule, GridSpec, SimParams, SimulationSignalManager


@pytest.fixture
def sample_enum():
    """Sample enum for testing."""

    class SampleEventTypes(Enum):
        LIFECYCLE_EVENT = "lifecycle_event"
        PROCESSING_EVENT = "processing_event"

    return SampleEventTypes


@pytest.fixture
def signal_config(sample_enum):
    """Sample signal configuration."""
    return {"lifecycle": sample_enum, "processing": sample_enum}


@pytest.fixture
def received_events():
    """List to collect received events."""
    return []


@pytest.fixture
def event_receiver(received_events):
    """Event receiver function for testing."""

    def receiver(sender, **kwargs):
        received_events.append({"sender": sender, **kwargs})

    return receiver


@pytest.fixture
def event_recorder(received_events, event_receiver):
    """Every event sent on the simulation signals while the test runs."""
    manager = SimulationSignalManager()
    for signal_obj in manager.get_signals():
        signal_obj.connect(event_receiver, weak=False)
    yield received_events
    for signal_obj in manager.get_signals():
        signal_obj.disconnect(event_receiver)


@pytest.fixture
def log_messages():
    """``(level, message)`` pairs logged by the package during the test."""
    captured: list[tuple[str, str]] = []

    def sink(message):
        record = message.record
        captured.append((record["level"].name, record["message"]))

    logger.enable("mrfm_spincat")
    handler_id = logger.add(sink, level="DEBUG", format="{message}")
    yield captured
    logger.remove(handler_id)
    logger.disable("mrfm_spincat")


@pytest.fixture
def small_grid():
    """[-16, 16) with 512 points: resolves a coherent packet with |alpha| up to ~8."""
    return GridSpec(-16.0, 16.0, 512)


@pytest.fixture
def wide_grid():
    """[-32, 32) with 1024 points: room for a 20-unit oscillation."""
    return GridSpec(-32.0, 32.0, 1024)


@pytest.fixture
def cai_schedule():
    return DriveSchedule.cai_paper(100.0)


@pytest.fixture
def scaled_schedule():
    """CAI schedule with epsilon and dphi/dtau divided by ten (same initial angle)."""
    return DriveSchedule.cai_paper(
        100.0,
        epsilon=40.0,
        sweep_offset=-600.0,
        sweep_rate=30.0,
        modulation_amplitude=100.0,
    )


@pytest.fixture
def make_params(small_grid):
    """Factory for ``SimParams`` on the small grid."""

    def make(schedule, eta=0.3, grid=None, dt=1e-3, t_end=None, epsilon_scale=None):
        if epsilon_scale is None:
            epsilon_scale = max(abs(schedule.evaluate(0.0).epsilon), 1.0)
        return SimParams(
            epsilon_scale=epsilon_scale,
            eta=eta,
            schedule=schedule,
            t_end=schedule.t_end if t_end is None else t_end,
            grid=small_grid if grid is None else grid,
            dt=dt,
        )

    return make


@pytest.fixture
def free_schedule():
    """No drive at all over one cantilever period."""
    return DriveSchedule.constant(2.0 * math.pi, 0.0, 0.0)


@pytest.fixture
def linear_sweep_schedule():
    """Small-parameter drive used by the oracle comparisons."""
    return DriveSchedule.custom(
        [
            {
                "start": 0.0,
                "end": 5.0,
                "dphi": {"poly": [-20.0, 1.0]},
                "epsilon": {"poly": [5.0]},
            }
        ]
    )


@pytest.fixture
def tiny_config(tmp_path):
    """A quantum run over two time units on the small grid, writing into ``tmp_path/out``."""
    return {
        "run": {"mode": "quantum", "t_end": 2.0, "dt": 1e-3, "samples_per_period": 32},
        "model": {
            "epsilon": 5.0,
            "eta": 0.3,
            "schedule": "custom",
            "segments": [
                {
                    "start": 0.0,
                    "end": 2.0,
                    "dphi": {"poly": [-20.0, 1.0]},
                    "epsilon": {"poly": [5.0]},
                }
            ],
        },
        "grid": {"z_min": -16.0, "z_max": 16.0, "n_points": 512},
        "init": {"alpha_re": -math.sqrt(2.0), "spin": "up"},
        "snapshots": [0.0, 1.0, 2.0],
        "outputs": {"dir": str(tmp_path / "out")},
    }


@pytest.fixture
def config_file(tmp_path):
    """Factory writing a configuration mapping to ``tmp_path`` as YAML."""

    def write(data, name="config.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
        return path

    return write
