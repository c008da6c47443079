"""Dimensionless spin-cantilever model.

Time is ``tau = omega_c * t`` and the cantilever coordinate is
``z = Z * sqrt(m_c * omega_c / hbar)``. In the frame rotating with the rf field
the spin sees the effective field ``(epsilon, 0, -dphi/dtau + 2*eta*z)`` and the
dimensionless Hamiltonian is

    H = p**2/2 + z**2/2 - B_eff(tau, z) . S

The drive enters only through ``dphi/dtau`` and ``epsilon(tau)``, both given as
piecewise analytic functions by a ``DriveSchedule``.
"""

import bisect
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Protocol

import numpy as np
from loguru import logger
from numpy.polynomial import Polynomial
from scipy import constants

from .enums import ScheduleKind
from .errors import ParameterError, ScheduleError, ScheduleRangeError
from .grid import GridSpec

NUCLEAR_MAGNETON = constants.physical_constants["nuclear magneton"][0]
BOHR_MAGNETON = constants.physical_constants["Bohr magneton"][0]

# Standard deviation of z in a coherent state.
COHERENT_SIGMA = 1.0 / math.sqrt(2.0)

_BOUNDARY_TOL = 1e-12


class Expression(Protocol):
    """Analytic function of tau with derivative and definite integral."""

    def value(self, tau: float) -> float: ...

    def derivative(self, tau: float) -> float: ...

    def integral(self, a: float, b: float) -> float: ...

    def to_dict(self) -> dict: ...


@dataclass(frozen=True)
class PolyExpr:
    """Polynomial ``c0 + c1*tau + c2*tau**2 + ...`` in absolute tau."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        if not self.coeffs:
            raise ScheduleError("segments", "polynomial needs at least one coefficient")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @cached_property
    def _poly(self) -> Polynomial:
        return Polynomial(self.coeffs)

    @cached_property
    def _deriv(self) -> Polynomial:
        return self._poly.deriv()

    @cached_property
    def _anti(self) -> Polynomial:
        return self._poly.integ()

    def value(self, tau: float) -> float:
        return float(self._poly(tau))

    def derivative(self, tau: float) -> float:
        return float(self._deriv(tau))

    def integral(self, a: float, b: float) -> float:
        return float(self._anti(b) - self._anti(a))

    def is_constant(self, value: float) -> bool:
        return all(c == 0.0 for c in self.coeffs[1:]) and self.coeffs[0] == value

    def to_dict(self) -> dict:
        return {"poly": list(self.coeffs)}


@dataclass(frozen=True)
class SinExpr:
    """``offset + amplitude * sin(frequency*(tau - origin) + phase)``."""

    amplitude: float
    frequency: float = 1.0
    phase: float = 0.0
    offset: float = 0.0
    origin: float = 0.0

    def _arg(self, tau: float) -> float:
        return self.frequency * (tau - self.origin) + self.phase

    def value(self, tau: float) -> float:
        return self.offset + self.amplitude * math.sin(self._arg(tau))

    def derivative(self, tau: float) -> float:
        return self.amplitude * self.frequency * math.cos(self._arg(tau))

    def integral(self, a: float, b: float) -> float:
        total = self.offset * (b - a)
        if self.frequency == 0.0:
            return total + self.amplitude * math.sin(self.phase) * (b - a)
        return total - self.amplitude / self.frequency * (
            math.cos(self._arg(b)) - math.cos(self._arg(a))
        )

    def to_dict(self) -> dict:
        return {
            "sin": {
                "amplitude": self.amplitude,
                "frequency": self.frequency,
                "phase": self.phase,
                "offset": self.offset,
                "origin": self.origin,
            }
        }


def expression_from_dict(spec: dict) -> Expression:
    """Build an expression from ``{"poly": [...]}`` or ``{"sin": {...}}``."""
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ScheduleError("segments", f"expression must have one key, got {spec!r}")
    try:
        if "poly" in spec:
            return PolyExpr(tuple(float(c) for c in spec["poly"]))
        if "sin" in spec:
            return SinExpr(**{k: float(v) for k, v in spec["sin"].items()})
    except (TypeError, ValueError, AttributeError) as ex:
        raise ScheduleError("segments", f"bad expression {spec!r}: {ex}") from ex
    raise ScheduleError(
        "segments", f"unsupported expression {next(iter(spec))!r} (poly, sin)"
    )


@dataclass(frozen=True)
class Segment:
    """One schedule piece on ``[start, end]``."""

    start: float
    end: float
    dphi: Expression
    epsilon: Expression

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "dphi": self.dphi.to_dict(),
            "epsilon": self.epsilon.to_dict(),
        }


class ScheduleValue(NamedTuple):
    dphi_dtau: float
    epsilon: float
    d2phi_dtau2: float


@dataclass(frozen=True)
class DriveSchedule:
    """Piecewise analytic ``dphi/dtau`` and ``epsilon`` covering ``[0, t_end]``.

    Segment boundaries evaluate to the right-hand segment; ``tau == t_end``
    evaluates to the last one. ``pulse_times`` lists instantaneous pi rotations
    about x and is only used by ``PI_PULSE`` schedules.
    """

    kind: ScheduleKind
    segments: tuple[Segment, ...]
    pulse_times: tuple[float, ...] = ()
    _starts: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segments = tuple(self.segments)
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "pulse_times", tuple(float(t) for t in self.pulse_times))
        if not segments:
            raise ScheduleError("segments", "schedule needs at least one segment")
        if segments[0].start != 0.0:
            raise ScheduleError("segments", f"first segment starts at {segments[0].start}, not 0")
        for seg in segments:
            if not seg.end > seg.start:
                raise ScheduleError("segments", f"empty segment [{seg.start}, {seg.end}]")
        for left, right in zip(segments, segments[1:], strict=False):
            gap = right.start - left.end
            if abs(gap) > _BOUNDARY_TOL * max(1.0, abs(left.end)):
                what = "gap" if gap > 0 else "overlap"
                raise ScheduleError(
                    "segments", f"{what} between {left.end} and {right.start}"
                )
        if self.kind is ScheduleKind.RABI:
            for seg in segments:
                dphi_zero = isinstance(seg.dphi, PolyExpr) and seg.dphi.is_constant(0.0)
                eps_one = isinstance(seg.epsilon, PolyExpr) and seg.epsilon.is_constant(1.0)
                if not (dphi_zero and eps_one):
                    raise ScheduleError("segments", "RABI requires dphi/dtau = 0 and epsilon = 1")
        if self.pulse_times:
            if self.kind is not ScheduleKind.PI_PULSE:
                raise ScheduleError("pulse_times", "pulse times are only valid for PI_PULSE")
            if list(self.pulse_times) != sorted(self.pulse_times):
                raise ScheduleError("pulse_times", "pulse times must be sorted")
            if self.pulse_times[0] < 0.0 or self.pulse_times[-1] > self.t_end:
                raise ScheduleError("pulse_times", "pulse times must lie inside the schedule")
        object.__setattr__(self, "_starts", tuple(seg.start for seg in segments))

    @property
    def t_end(self) -> float:
        return self.segments[-1].end

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Interior segment boundaries."""
        return self._starts[1:]

    def segment_at(self, tau: float) -> Segment:
        if not (-_BOUNDARY_TOL <= tau <= self.t_end * (1.0 + _BOUNDARY_TOL) + _BOUNDARY_TOL):
            raise ScheduleRangeError(tau, 0.0, self.t_end)
        index = bisect.bisect_right(self._starts, tau) - 1
        return self.segments[max(index, 0)]

    def evaluate(self, tau: float) -> ScheduleValue:
        seg = self.segment_at(tau)
        return ScheduleValue(
            seg.dphi.value(tau), seg.epsilon.value(tau), seg.dphi.derivative(tau)
        )

    def phase(self, tau: float) -> float:
        """Analytic ``phi(tau)`` with ``phi(0) = 0``."""
        self.segment_at(tau)
        total = 0.0
        for seg in self.segments:
            if tau <= seg.start:
                break
            total += seg.dphi.integral(seg.start, min(tau, seg.end))
        return total

    def pulses_between(self, t_a: float, t_b: float) -> list[float]:
        """Pulse times in the half-open interval ``(t_a, t_b]``."""
        return [t for t in self.pulse_times if t_a < t <= t_b]

    @classmethod
    def cai_paper(
        cls,
        t_end: float,
        epsilon: float = 400.0,
        sweep_offset: float = -6000.0,
        sweep_rate: float = 300.0,
        sweep_end: float = 20.0,
        modulation_amplitude: float = 1000.0,
    ) -> "DriveSchedule":
        """Linear sweep of ``dphi/dtau`` up to ``sweep_end``, then sinusoidal modulation."""
        eps = PolyExpr((epsilon,))
        sweep = PolyExpr((sweep_offset, sweep_rate))
        modulation = SinExpr(modulation_amplitude, origin=sweep_end)
        if t_end <= sweep_end:
            return cls(ScheduleKind.CAI_PAPER, (Segment(0.0, t_end, sweep, eps),))
        return cls(
            ScheduleKind.CAI_PAPER,
            (
                Segment(0.0, sweep_end, sweep, eps),
                Segment(sweep_end, t_end, modulation, eps),
            ),
        )

    @classmethod
    def cai_ramped(
        cls,
        t_end: float,
        epsilon: float = 400.0,
        ramp_rate: float = 20.0,
        sweep_offset: float = -6000.0,
        sweep_rate: float = 300.0,
        sweep_end: float = 20.0,
        modulation_amplitude: float = 1000.0,
    ) -> "DriveSchedule":
        """Same phase modulation as ``cai_paper``; ``epsilon`` ramps as
        ``ramp_rate*tau`` until it reaches ``epsilon``.
        """
        if ramp_rate <= 0.0:
            raise ScheduleError("ramp_rate", "ramp rate must be positive")
        ramp_end = epsilon / ramp_rate
        cuts = sorted({0.0, t_end, *(t for t in (ramp_end, sweep_end) if 0.0 < t < t_end)})
        sweep = PolyExpr((sweep_offset, sweep_rate))
        modulation = SinExpr(modulation_amplitude, origin=sweep_end)
        ramp = PolyExpr((0.0, ramp_rate))
        plateau = PolyExpr((epsilon,))
        segments = []
        for a, b in zip(cuts, cuts[1:], strict=False):
            mid = 0.5 * (a + b)
            segments.append(
                Segment(
                    a,
                    b,
                    sweep if mid < sweep_end else modulation,
                    ramp if mid < ramp_end else plateau,
                )
            )
        return cls(ScheduleKind.CAI_RAMPED, tuple(segments))

    @classmethod
    def rabi(cls, t_end: float) -> "DriveSchedule":
        """Constant phase with the Rabi frequency equal to the cantilever frequency."""
        return cls(
            ScheduleKind.RABI, (Segment(0.0, t_end, PolyExpr((0.0,)), PolyExpr((1.0,))),)
        )

    @classmethod
    def pi_pulse(
        cls, t_end: float, spacing: float = math.pi, first_pulse: float = math.pi
    ) -> "DriveSchedule":
        """No continuous rf; instantaneous pi pulses every ``spacing`` from ``first_pulse``."""
        if spacing <= 0.0:
            raise ScheduleError("pulse_spacing", "pulse spacing must be positive")
        count = int(math.floor((t_end - first_pulse) / spacing + _BOUNDARY_TOL)) + 1
        pulses = tuple(first_pulse + k * spacing for k in range(max(count, 0)))
        return cls(
            ScheduleKind.PI_PULSE,
            (Segment(0.0, t_end, PolyExpr((0.0,)), PolyExpr((0.0,))),),
            pulses,
        )

    @classmethod
    def constant(cls, t_end: float, dphi_dtau: float, epsilon: float) -> "DriveSchedule":
        """Static effective field, as a single custom segment."""
        return cls(
            ScheduleKind.CUSTOM_PIECEWISE,
            (Segment(0.0, t_end, PolyExpr((dphi_dtau,)), PolyExpr((epsilon,))),),
        )

    @classmethod
    def custom(cls, segments: list[dict]) -> "DriveSchedule":
        """Build from ``{"start", "end", "dphi", "epsilon"}`` mappings."""
        built = tuple(
            Segment(
                float(s["start"]),
                float(s["end"]),
                expression_from_dict(s["dphi"]),
                expression_from_dict(s["epsilon"]),
            )
            for s in segments
        )
        return cls(ScheduleKind.CUSTOM_PIECEWISE, built)


def eval_schedule(schedule: DriveSchedule, tau: float) -> ScheduleValue:
    """Return ``(dphi/dtau, epsilon, d2phi/dtau2)`` at ``tau``."""
    return schedule.evaluate(tau)


@dataclass(frozen=True)
class SimParams:
    """Complete configuration of one simulation run."""

    epsilon_scale: float
    eta: float
    schedule: DriveSchedule
    t_end: float
    grid: GridSpec
    dt: float
    amplitude_bound: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta >= 0.0):
            raise ParameterError("eta", f"must be finite and >= 0, got {self.eta}")
        if not (math.isfinite(self.epsilon_scale) and self.epsilon_scale > 0.0):
            raise ParameterError("epsilon_scale", f"must be > 0, got {self.epsilon_scale}")
        if not (math.isfinite(self.t_end) and self.t_end > 0.0):
            raise ParameterError("t_end", f"must be > 0, got {self.t_end}")
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ParameterError("dt", f"must be > 0, got {self.dt}")
        if self.schedule.t_end < self.t_end * (1.0 - _BOUNDARY_TOL):
            raise ParameterError(
                "schedule",
                f"schedule ends at {self.schedule.t_end} before t_end={self.t_end}",
            )
        if self.amplitude_bound is not None:
            reach = abs(self.amplitude_bound) + 5.0 * COHERENT_SIGMA
            if self.grid.z_max <= reach or self.grid.z_min >= -reach:
                raise ParameterError(
                    "grid",
                    f"grid [{self.grid.z_min}, {self.grid.z_max}] does not contain "
                    f"|z| <= {reach:.4g} (amplitude bound plus 5 sigma)",
                )


@dataclass(frozen=True)
class EffectiveField:
    """Rotating-frame effective field; components may be arrays over z."""

    bx: float | np.ndarray
    by: float | np.ndarray
    bz: float | np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.bx, self.by, self.bz], dtype=float)

    @property
    def magnitude(self) -> float | np.ndarray:
        return np.sqrt(self.bx**2 + self.by**2 + self.bz**2)

    @property
    def direction(self) -> np.ndarray:
        vec = self.vector
        return vec / np.linalg.norm(vec, axis=0)


def effective_field(params: SimParams, tau: float, z: float | np.ndarray) -> EffectiveField:
    """``(epsilon(tau), 0, -dphi/dtau(tau) + 2*eta*z)``."""
    dphi, eps, _ = params.schedule.evaluate(tau)
    bz = -dphi + 2.0 * params.eta * z
    by = np.zeros_like(bz) if isinstance(bz, np.ndarray) else 0.0
    bx = np.full_like(bz, eps) if isinstance(bz, np.ndarray) else eps
    return EffectiveField(bx, by, bz)


def drive_field(params: SimParams, tau: float) -> EffectiveField:
    """Effective field without the cantilever back-action, ``(epsilon, 0, -dphi/dtau)``."""
    dphi, eps, _ = params.schedule.evaluate(tau)
    return EffectiveField(eps, 0.0, -dphi)


def adiabaticity_margin(params: SimParams, tau: float) -> float:
    """``|d2phi/dtau2| / epsilon**2``; ``inf`` where epsilon vanishes."""
    _, eps, d2phi = params.schedule.evaluate(tau)
    if eps == 0.0:
        return math.inf
    return abs(d2phi) / eps**2


def peak_adiabaticity_margin(
    params: SimParams, t_a: float = 0.0, t_b: float | None = None, samples: int = 2048
) -> float:
    """Largest ``adiabaticity_margin`` on ``[t_a, t_b]``, sampled segment by segment."""
    t_b = params.t_end if t_b is None else t_b
    worst = 0.0
    for seg in params.schedule.segments:
        lo, hi = max(seg.start, t_a), min(seg.end, t_b)
        if lo > hi:
            continue
        for tau in np.linspace(lo, hi, samples):
            worst = max(worst, adiabaticity_margin(params, float(tau)))
    return worst


@dataclass(frozen=True)
class PhysicalParams:
    """SI parameters of the spin and cantilever."""

    g_factor: float
    magneton: float
    B0: float
    B1: float
    field_gradient: float
    effective_mass: float
    omega_c: float
    quality_factor: float

    @property
    def gamma(self) -> float:
        """Gyromagnetic ratio ``g*mu/hbar`` in rad/(s T)."""
        return self.g_factor * self.magneton / constants.hbar

    @property
    def omega_1(self) -> float:
        return self.gamma * self.B1

    @property
    def omega_L(self) -> float:
        return self.gamma * self.B0

    def validate(self) -> None:
        for name in (
            "g_factor",
            "magneton",
            "B0",
            "B1",
            "field_gradient",
            "effective_mass",
            "omega_c",
            "quality_factor",
        ):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ParameterError(name, f"must be finite and positive, got {value}")


@dataclass(frozen=True)
class PhysicalScaling:
    """Dimensionless parameters of a physical setup and the unit conversions."""

    epsilon: float
    eta: float
    length_scale: float
    time_scale: float
    gamma: float
    g_factor: float
    magneton: float
    effective_mass: float
    omega_c: float

    def to_meters(self, z: float | np.ndarray) -> float | np.ndarray:
        return z * self.length_scale

    def to_dimensionless_length(self, Z: float | np.ndarray) -> float | np.ndarray:
        return Z / self.length_scale

    def to_seconds(self, tau: float | np.ndarray) -> float | np.ndarray:
        return tau * self.time_scale

    def to_dimensionless_time(self, t: float | np.ndarray) -> float | np.ndarray:
        return t / self.time_scale

    def rf_field(self, epsilon: float | None = None) -> float:
        """``B1`` in tesla giving the dimensionless amplitude ``epsilon``."""
        eps = self.epsilon if epsilon is None else epsilon
        return eps * self.omega_c / self.gamma

    def field_gradient(self, eta: float | None = None) -> float:
        """``dBz/dZ`` in T/m giving the coupling ``eta``."""
        value = self.eta if eta is None else eta
        return (
            value
            * 2.0
            * math.sqrt(self.effective_mass * self.omega_c**3 * constants.hbar)
            / (self.g_factor * self.magneton)
        )


def from_physical(pp: PhysicalParams) -> PhysicalScaling:
    """Dimensionless ``epsilon``, ``eta`` and unit scales of a physical setup."""
    pp.validate()
    eta = (
        pp.g_factor
        * pp.magneton
        * pp.field_gradient
        / (2.0 * math.sqrt(pp.effective_mass * pp.omega_c**3 * constants.hbar))
    )
    scaling = PhysicalScaling(
        epsilon=pp.omega_1 / pp.omega_c,
        eta=eta,
        length_scale=math.sqrt(constants.hbar / (pp.effective_mass * pp.omega_c)),
        time_scale=1.0 / pp.omega_c,
        gamma=pp.gamma,
        g_factor=pp.g_factor,
        magneton=pp.magneton,
        effective_mass=pp.effective_mass,
        omega_c=pp.omega_c,
    )
    logger.debug(
        "physical scaling: epsilon={:.4g} eta={:.4g} length={:.4g} m",
        scaling.epsilon,
        scaling.eta,
        scaling.length_scale,
    )
    return scaling
