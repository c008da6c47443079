"""YAML run configuration: parsing, validation, rendering and sweep expansion."""

import dataclasses
import hashlib
import itertools
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import yaml
from loguru import logger

from .enums import OutputFormat, RunMode, ScheduleKind, SpinInitKind, parse_enum
from .errors import ConfigError, ParameterError, ScheduleRangeError
from .grid import GridSpec
from .model import DriveSchedule, PhysicalParams, SimParams
from .quantum import CoherentInit, SpinInit

__all__ = [
    "EFFECTIVE_CONFIG_NAME",
    "GridSection",
    "InitSection",
    "ModelSection",
    "OutputSection",
    "RunConfig",
    "RunSection",
    "SweepMember",
    "SweepSection",
    "apply_overrides",
    "load_config",
    "param_hash",
    "parse_config",
    "render_config",
    "sweep_members",
]

EFFECTIVE_CONFIG_NAME = "effective_config.yaml"


def _float(value: Any) -> float:
    if isinstance(value, bool):
        raise TypeError(f"expected a number, got {value!r}")
    result = float(value)
    if not math.isfinite(result):
        raise ValueError(f"expected a finite number, got {value!r}")
    return result


def _optional_float(value: Any) -> float | None:
    return None if value is None else _float(value)


def _int(value: Any) -> int:
    number = _float(value)
    if number != int(number):
        raise ValueError(f"expected an integer, got {value!r}")
    return int(number)


def _window(value: Any) -> tuple[float, float] | None:
    if value is None:
        return None
    lo, hi = (_float(v) for v in value)
    if not lo < hi:
        raise ValueError(f"window start {lo} must precede its end {hi}")
    return lo, hi


def _floats(value: Any) -> tuple[float, ...]:
    if isinstance(value, str | int | float):
        value = [value]
    return tuple(_float(v) for v in value or ())


def _one_of[E: Enum](enum_type: type[E]) -> Callable[[Any], E]:
    return lambda value: parse_enum(enum_type, value)


def _many_of[E: Enum](enum_type: type[E]) -> Callable[[Any], tuple[E, ...]]:
    def convert(value: Any) -> tuple[E, ...]:
        if isinstance(value, str):
            value = [value]
        return tuple(parse_enum(enum_type, v) for v in value or ())

    return convert


def _segments(value: Any) -> tuple[dict, ...]:
    segments = tuple(value or ())
    for seg in segments:
        if not isinstance(seg, dict):
            raise TypeError(f"segment must be a mapping, got {seg!r}")
        missing = {"start", "end", "dphi", "epsilon"} - set(seg)
        if missing:
            raise ValueError(f"segment is missing {sorted(missing)}")
    return segments


def _setting(default: Any, convert: Callable[[Any], Any]):
    return field(default=default, metadata={"convert": convert})


_REQUIRED = dataclasses.MISSING


@dataclass(frozen=True)
class RunSection:
    mode: RunMode = _setting(RunMode.QUANTUM, _one_of(RunMode))
    t_end: float = _setting(100.0, _float)
    dt: float = _setting(2e-5, _float)
    samples_per_period: int = _setting(32, _int)
    peak_threshold: float = _setting(1e-8, _float)
    phase_window: tuple[float, float] | None = _setting(None, _window)
    classical_rtol: float = _setting(1e-10, _float)
    workers: int = _setting(1, _int)
    progress_every: int = _setting(64, _int)


@dataclass(frozen=True)
class ModelSection:
    epsilon: float = _setting(_REQUIRED, _float)
    eta: float = _setting(_REQUIRED, _float)
    schedule: ScheduleKind = _setting(ScheduleKind.CAI_PAPER, _one_of(ScheduleKind))
    sweep_offset: float = _setting(-6000.0, _float)
    sweep_rate: float = _setting(300.0, _float)
    sweep_end: float = _setting(20.0, _float)
    modulation_amplitude: float = _setting(1000.0, _float)
    ramp_rate: float = _setting(20.0, _float)
    pulse_spacing: float = _setting(math.pi, _float)
    first_pulse: float = _setting(math.pi, _float)
    segments: tuple[dict, ...] = _setting((), _segments)


@dataclass(frozen=True)
class GridSection:
    z_min: float = _setting(-64.0, _float)
    z_max: float = _setting(64.0, _float)
    n_points: int = _setting(4096, _int)
    amplitude_bound: float | None = _setting(None, _optional_float)


@dataclass(frozen=True)
class InitSection:
    alpha_re: float = _setting(-10.0 * math.sqrt(2.0), _float)
    alpha_im: float = _setting(0.0, _float)
    spin: SpinInitKind = _setting(SpinInitKind.UP, _one_of(SpinInitKind))
    theta: float = _setting(0.0, _float)
    phi: float = _setting(0.0, _float)


@dataclass(frozen=True)
class OutputSection:
    dir: str = _setting("out", str)
    formats: tuple[OutputFormat, ...] = _setting(
        tuple(OutputFormat), _many_of(OutputFormat)
    )


@dataclass(frozen=True)
class SweepSection:
    mode: RunMode = _setting(RunMode.QUANTUM, _one_of(RunMode))
    eta: tuple[float, ...] = _setting((), _floats)
    epsilon: tuple[float, ...] = _setting((), _floats)
    schedule: tuple[ScheduleKind, ...] = _setting((), _many_of(ScheduleKind))
    spin: tuple[SpinInitKind, ...] = _setting((), _many_of(SpinInitKind))

    @property
    def axes(self) -> dict[str, tuple]:
        """Non-empty sweep axes in enumeration order."""
        return {
            name: getattr(self, name)
            for name in ("eta", "epsilon", "schedule", "spin")
            if getattr(self, name)
        }


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration with every default applied."""

    model: ModelSection
    run: RunSection = field(default_factory=RunSection)
    grid: GridSection = field(default_factory=GridSection)
    init: InitSection = field(default_factory=InitSection)
    snapshots: tuple[float, ...] = ()
    outputs: OutputSection = field(default_factory=OutputSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    physical: PhysicalParams | None = None

    @property
    def mode(self) -> RunMode:
        return self.run.mode

    @property
    def output_dir(self) -> Path:
        return Path(self.outputs.dir)

    def wants(self, fmt: OutputFormat) -> bool:
        return fmt in self.outputs.formats

    def build_grid(self) -> GridSpec:
        return GridSpec(self.grid.z_min, self.grid.z_max, self.grid.n_points)

    def build_schedule(self) -> DriveSchedule:
        m, t_end = self.model, self.run.t_end
        match m.schedule:
            case ScheduleKind.CAI_PAPER:
                return DriveSchedule.cai_paper(
                    t_end,
                    epsilon=m.epsilon,
                    sweep_offset=m.sweep_offset,
                    sweep_rate=m.sweep_rate,
                    sweep_end=m.sweep_end,
                    modulation_amplitude=m.modulation_amplitude,
                )
            case ScheduleKind.CAI_RAMPED:
                return DriveSchedule.cai_ramped(
                    t_end,
                    epsilon=m.epsilon,
                    ramp_rate=m.ramp_rate,
                    sweep_offset=m.sweep_offset,
                    sweep_rate=m.sweep_rate,
                    sweep_end=m.sweep_end,
                    modulation_amplitude=m.modulation_amplitude,
                )
            case ScheduleKind.RABI:
                return DriveSchedule.rabi(t_end)
            case ScheduleKind.PI_PULSE:
                return DriveSchedule.pi_pulse(
                    t_end, spacing=m.pulse_spacing, first_pulse=m.first_pulse
                )
            case ScheduleKind.CUSTOM_PIECEWISE:
                if not m.segments:
                    raise ConfigError(
                        "model.segments: the custom schedule needs segments",
                        field="model.segments",
                    )
                return DriveSchedule.custom(list(m.segments))
        raise ConfigError(f"model.schedule: unsupported {m.schedule!r}", field="model.schedule")

    def build_params(self) -> SimParams:
        return SimParams(
            epsilon_scale=self.model.epsilon,
            eta=self.model.eta,
            schedule=self.build_schedule(),
            t_end=self.run.t_end,
            grid=self.build_grid(),
            dt=self.run.dt,
            amplitude_bound=self.grid.amplitude_bound,
        )

    def coherent(self) -> CoherentInit:
        return CoherentInit(complex(self.init.alpha_re, self.init.alpha_im))

    def spin_init(self) -> SpinInit:
        return SpinInit(self.init.spin, self.init.theta, self.init.phi)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            name: _section_dict(getattr(self, name))
            for name in ("run", "model", "grid", "init")
        }
        data["snapshots"] = list(self.snapshots)
        data["outputs"] = _section_dict(self.outputs)
        data["sweep"] = _section_dict(self.sweep)
        if self.physical is not None:
            data["physical"] = dataclasses.asdict(self.physical)
        return data


_SECTIONS: dict[str, type] = {
    "run": RunSection,
    "model": ModelSection,
    "grid": GridSection,
    "init": InitSection,
    "outputs": OutputSection,
    "sweep": SweepSection,
}
_PHYSICAL_KEYS = tuple(f.name for f in dataclasses.fields(PhysicalParams))
_KNOWN_SECTIONS = (*_SECTIONS, "snapshots", "physical")

# ParameterError.field -> configuration key
_FIELD_PATHS = {
    "eta": "model.eta",
    "epsilon_scale": "model.epsilon",
    "schedule": "model.schedule",
    "segments": "model.segments",
    "ramp_rate": "model.ramp_rate",
    "pulse_spacing": "model.pulse_spacing",
    "pulse_times": "model.first_pulse",
    "t_end": "run.t_end",
    "dt": "run.dt",
    "grid": "grid.amplitude_bound",
    "z_min": "grid.z_min",
    "z_max": "grid.z_max",
    "n_points": "grid.n_points",
    "spin": "init.spin",
    **{name: f"physical.{name}" for name in _PHYSICAL_KEYS},
}


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, tuple | list):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def _section_dict(section: Any) -> dict[str, Any]:
    return {f.name: _plain(getattr(section, f.name)) for f in dataclasses.fields(section)}


def _build_section(name: str, raw: Any) -> Any:
    section_cls = _SECTIONS[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping, got {type(raw).__name__}", field=name)
    values = {}
    for f in dataclasses.fields(section_cls):
        path = f"{name}.{f.name}"
        if f.name not in raw:
            if f.default is _REQUIRED:
                raise ConfigError(f"{path}: required key is missing", field=path)
            continue
        try:
            values[f.name] = f.metadata["convert"](raw[f.name])
        except (TypeError, ValueError) as ex:
            raise ConfigError(f"{path}: {ex}", field=path) from ex
    return section_cls(**values)


def _unknown_keys(data: dict) -> list[str]:
    unknown = [str(key) for key in data if key not in _KNOWN_SECTIONS]
    for name, section_cls in _SECTIONS.items():
        raw = data.get(name)
        if isinstance(raw, dict):
            allowed = {f.name for f in dataclasses.fields(section_cls)}
            unknown.extend(f"{name}.{key}" for key in raw if key not in allowed)
    physical = data.get("physical")
    if isinstance(physical, dict):
        unknown.extend(f"physical.{key}" for key in physical if key not in _PHYSICAL_KEYS)
    return unknown


def _build_physical(raw: Any) -> PhysicalParams | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigError("physical: expected a mapping", field="physical")
    missing = [key for key in _PHYSICAL_KEYS if key not in raw]
    if missing:
        raise ConfigError(
            f"physical: missing keys {', '.join(missing)}", field=f"physical.{missing[0]}"
        )
    values = {}
    for key in _PHYSICAL_KEYS:
        try:
            values[key] = _float(raw[key])
        except (TypeError, ValueError) as ex:
            raise ConfigError(f"physical.{key}: {ex}", field=f"physical.{key}") from ex
    return PhysicalParams(**values)


def _as_config_error(ex: ParameterError | ScheduleRangeError) -> ConfigError:
    if isinstance(ex, ParameterError):
        path = _FIELD_PATHS.get(ex.field, ex.field)
        message = str(ex)
        if message.startswith(f"{ex.field}: "):
            message = message[len(ex.field) + 2 :]
        return ConfigError(f"{path}: {message}", field=path)
    return ConfigError(f"run.t_end: {ex}", field="run.t_end")


def _validate(cfg: RunConfig) -> None:
    snapshots = list(cfg.snapshots)
    if snapshots != sorted(snapshots):
        raise ConfigError("snapshots: times must be sorted", field="snapshots")
    if snapshots and (snapshots[0] < 0.0 or snapshots[-1] > cfg.run.t_end):
        raise ConfigError(
            f"snapshots: times must lie in [0, {cfg.run.t_end}]", field="snapshots"
        )
    if cfg.run.samples_per_period < 1:
        raise ConfigError("run.samples_per_period: must be >= 1", field="run.samples_per_period")
    if cfg.run.workers < 1:
        raise ConfigError("run.workers: must be >= 1", field="run.workers")
    if not 0.0 < cfg.run.peak_threshold < 1.0:
        raise ConfigError("run.peak_threshold: must lie in (0, 1)", field="run.peak_threshold")
    if cfg.run.classical_rtol <= 0.0:
        raise ConfigError("run.classical_rtol: must be > 0", field="run.classical_rtol")
    if cfg.mode is RunMode.SWEEP:
        if not cfg.sweep.axes:
            raise ConfigError("sweep: sweep mode needs at least one non-empty axis", field="sweep")
        if cfg.sweep.mode is RunMode.SWEEP:
            raise ConfigError("sweep.mode: sweep members cannot themselves sweep", field="sweep.mode")
        members = [member.config for member in sweep_members(cfg)]
    else:
        members = [cfg]
    for member in members:
        try:
            member.build_params()
            if member.physical is not None:
                member.physical.validate()
        except (ParameterError, ScheduleRangeError) as ex:
            raise _as_config_error(ex) from ex


def parse_config(text: str) -> RunConfig:
    """Parse and validate YAML configuration text.

    Raises:
        ConfigError: On malformed YAML, unknown keys (all listed at once) or
            any parameter that violates a model invariant; ``field`` names the
            offending key as ``section.key``.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as ex:
        raise ConfigError(f"malformed configuration: {ex}") from ex
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping of sections")
    unknown = _unknown_keys(data)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}", unknown_keys=unknown)
    if "model" not in data:
        raise ConfigError("model: required section is missing", field="model")

    sections = {name: _build_section(name, data.get(name)) for name in _SECTIONS}
    try:
        snapshots = _floats(data.get("snapshots"))
    except (TypeError, ValueError) as ex:
        raise ConfigError(f"snapshots: {ex}", field="snapshots") from ex
    cfg = RunConfig(
        snapshots=snapshots, physical=_build_physical(data.get("physical")), **sections
    )
    _validate(cfg)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    """Read and parse a configuration file."""
    text = Path(path).read_text(encoding="utf-8")
    logger.debug("loaded configuration {}", path)
    return parse_config(text)


def render_config(cfg: RunConfig) -> str:
    """YAML text of the effective configuration; ``parse_config`` inverts it."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def param_hash(cfg: RunConfig) -> str:
    """SHA-256 of the rendered effective configuration."""
    return hashlib.sha256(render_config(cfg).encode("utf-8")).hexdigest()


def apply_overrides(
    cfg: RunConfig,
    *,
    out: str | Path | None = None,
    workers: int | None = None,
    dt: float | None = None,
    snapshots: list[float] | None = None,
) -> RunConfig:
    """Merge command-line overrides into ``cfg`` and revalidate."""
    run, outputs = cfg.run, cfg.outputs
    if out is not None:
        outputs = dataclasses.replace(outputs, dir=str(out))
    if workers is not None:
        run = dataclasses.replace(run, workers=int(workers))
    if dt is not None:
        run = dataclasses.replace(run, dt=float(dt))
    updated = dataclasses.replace(
        cfg,
        run=run,
        outputs=outputs,
        snapshots=cfg.snapshots if snapshots is None else tuple(float(t) for t in snapshots),
    )
    _validate(updated)
    return updated


@dataclass(frozen=True)
class SweepMember:
    index: int
    values: dict[str, Any]
    config: RunConfig

    @property
    def label(self) -> str:
        return f"run_{self.index:03d}"


def sweep_members(cfg: RunConfig) -> list[SweepMember]:
    """Cartesian product of the sweep axes in the fixed order eta, epsilon, schedule, spin."""
    axes = cfg.sweep.axes
    members = []
    for index, combo in enumerate(itertools.product(*axes.values())):
        values = dict(zip(axes, combo, strict=True))
        model_changes = {k: values[k] for k in ("eta", "epsilon", "schedule") if k in values}
        init = cfg.init
        if "spin" in values:
            init = dataclasses.replace(init, spin=values["spin"])
        member_cfg = dataclasses.replace(
            cfg,
            run=dataclasses.replace(cfg.run, mode=cfg.sweep.mode, workers=1),
            model=dataclasses.replace(cfg.model, **model_changes),
            init=init,
            outputs=dataclasses.replace(
                cfg.outputs, dir=str(cfg.output_dir / f"run_{index:03d}")
            ),
            sweep=SweepSection(),
        )
        members.append(SweepMember(index, {k: _plain(v) for k, v in values.items()}, member_cfg))
    return members
