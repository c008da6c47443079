"""Closed vocabularies used across the simulator."""

from enum import Enum, unique


@unique
class SimulationEventTypes(Enum):
    """Signal categories emitted by simulation services"""

    LIFECYCLE_EVENT = "lifecycle_event"
    PROPAGATION_EVENT = "propagation_event"
    ANALYSIS_EVENT = "analysis_event"
    OUTPUT_EVENT = "output_event"


@unique
class ScheduleKind(Enum):
    """Drive schedule families for dphi/dtau and epsilon(tau)."""

    CAI_PAPER = "cai_paper"
    CAI_RAMPED = "cai_ramped"
    RABI = "rabi"
    PI_PULSE = "pi_pulse"
    CUSTOM_PIECEWISE = "custom"


@unique
class SpinInitKind(Enum):
    """Initial spin preparations."""

    UP = "up"
    DOWN = "down"
    PLUS_X = "plus_x"
    ALONG_EFF = "along_eff"
    OPPOSITE_EFF = "opposite_eff"
    CUSTOM = "custom"


@unique
class RunMode(Enum):
    """What a run configuration executes."""

    QUANTUM = "quantum"
    CLASSICAL = "classical"
    CORRESPONDENCE = "correspondence"
    SWEEP = "sweep"


@unique
class PlotKind(Enum):
    """Plot-ready data layouts written by ``emit_plot_data``."""

    DENSITY_PANELS = "density_panels"
    TRAJECTORY = "trajectory"
    DECOMPOSITION = "decomposition"


@unique
class OutputFormat(Enum):
    """Files a run may write next to ``effective_config.yaml``."""

    TIMESERIES = "timeseries"
    SNAPSHOTS = "snapshots"
    DENSITY_PANELS = "density_panels"
    TRAJECTORY = "trajectory"
    DECOMPOSITION = "decomposition"


def parse_enum[E: Enum](enum_type: type[E], value: "str | E") -> E:
    """
    Look up an enum member by value or name, case-insensitively.

    Args:
        enum_type: Enum class to search.
        value: Member, member value (``"cai_paper"``) or member name (``"CAI_PAPER"``).

    Returns:
        The matching member.

    Raises:
        ValueError: If nothing matches; the message lists the accepted values.
    """
    if isinstance(value, enum_type):
        return value
    text = str(value).strip().lower()
    for member in enum_type:
        if text in (str(member.value).lower(), member.name.lower()):
            return member
    accepted = ", ".join(str(m.value) for m in enum_type)
    raise ValueError(f"{value!r} is not a valid {enum_type.__name__} ({accepted})")
