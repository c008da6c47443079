"""MRFM spin-cat - single-spin cantilever dynamics in cyclic adiabatic inversion.

Quantum split-step and Fock-basis propagators, Schrodinger-cat analysis, a
classical-limit solver and a configuration-driven runner, with blinker
signals for lifecycle and progress events.
"""

__version__ = "0.1.0"

from loguru import logger

# Simulation core
from .analysis import (
    Observables,
    PeakDecomposition,
    PhaseFit,
    decompose,
    detect_peaks,
    field_branching_ratio,
    fit_phase,
    observables,
    select_peak,
    summarize,
    theoretical_branching_ratio,
)

# Event layer
from .bridges import EventLogBridge, LoguruBridge, SignalBridgeABC
from .classical import ClassicalSolver, ClassicalState, integrate, stationary_amplitude

# Configuration and runs
from .config import RunConfig, parse_config, render_config
from .enums import (
    OutputFormat,
    PlotKind,
    RunMode,
    ScheduleKind,
    SimulationEventTypes,
    SpinInitKind,
)
from .errors import (
    AnalysisError,
    ConfigError,
    DecompositionError,
    GridError,
    ParameterError,
    PropagationError,
    ScheduleError,
    ScheduleRangeError,
    SpinCatError,
    StiffnessError,
    TruncationError,
)
from .grid import GridSpec
from .managers import BaseSignalManager, SignalManagerABC, SimulationSignalManager
from .model import (
    DriveSchedule,
    EffectiveField,
    PhysicalParams,
    SimParams,
    adiabaticity_margin,
    effective_field,
    eval_schedule,
    from_physical,
)
from .outputs import SnapshotRecord, emit_plot_data
from .processors import EventProcessor
from .quantum import (
    CoherentInit,
    SpinInit,
    SpinorField,
    SplitStepPropagator,
    init_state,
    leakage,
    oracle_propagate_fock,
    propagate,
    step,
)
from .runner import analyze_directory, run

logger.disable("mrfm_spincat")

__all__ = [
    # Model
    "DriveSchedule",
    "EffectiveField",
    "GridSpec",
    "PhysicalParams",
    "SimParams",
    "adiabaticity_margin",
    "effective_field",
    "eval_schedule",
    "from_physical",
    # Quantum
    "CoherentInit",
    "SpinInit",
    "SpinorField",
    "SplitStepPropagator",
    "init_state",
    "leakage",
    "oracle_propagate_fock",
    "propagate",
    "step",
    # Analysis
    "Observables",
    "PeakDecomposition",
    "PhaseFit",
    "decompose",
    "detect_peaks",
    "field_branching_ratio",
    "fit_phase",
    "observables",
    "select_peak",
    "summarize",
    "theoretical_branching_ratio",
    # Classical
    "ClassicalSolver",
    "ClassicalState",
    "integrate",
    "stationary_amplitude",
    # Runs
    "RunConfig",
    "SnapshotRecord",
    "analyze_directory",
    "emit_plot_data",
    "parse_config",
    "render_config",
    "run",
    # Events
    "BaseSignalManager",
    "EventLogBridge",
    "EventProcessor",
    "LoguruBridge",
    "SignalBridgeABC",
    "SignalManagerABC",
    "SimulationSignalManager",
    # Enums
    "OutputFormat",
    "PlotKind",
    "RunMode",
    "ScheduleKind",
    "SimulationEventTypes",
    "SpinInitKind",
    # Errors
    "AnalysisError",
    "ConfigError",
    "DecompositionError",
    "GridError",
    "ParameterError",
    "PropagationError",
    "ScheduleError",
    "ScheduleRangeError",
    "SpinCatError",
    "StiffnessError",
    "TruncationError",
]
