"""Classical limit of the spin-cantilever equations of motion.

    dz/dtau = p
    dp/dtau = -z + 2*eta*S_z
    dS/dtau = S x B_eff(tau, z)

The spin length is 1/2 for a single spin and ``n/2`` for an ensemble of ``n``
aligned spins; it is never renormalised, so its drift measures integrator
quality.
"""

import math
from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.integrate import solve_ivp

from .errors import ParameterError, StiffnessError
from .managers import SimulationSignalManager
from .model import PhysicalParams, SimParams, drive_field, from_physical
from .processors import EventProcessor
from .quantum import CoherentInit, SpinInit, spin_vector

__all__ = [
    "ClassicalSolver",
    "ClassicalState",
    "ClassicalTrajectory",
    "integrate",
    "rhs",
    "stationary_amplitude",
]

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12


@dataclass(frozen=True)
class ClassicalState:
    """Cantilever coordinate, velocity and average spin at time ``tau``."""

    z: float
    p: float
    spin: tuple[float, float, float]
    tau: float = 0.0

    def __post_init__(self):
        spin = tuple(float(c) for c in self.spin)
        if len(spin) != 3:
            raise ParameterError("spin", f"need three components, got {len(spin)}")
        object.__setattr__(self, "spin", spin)
        object.__setattr__(self, "z", float(self.z))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def spin_length(self) -> float:
        return math.sqrt(sum(c * c for c in self.spin))

    @property
    def energy(self) -> float:
        """Oscillator energy ``(p^2 + z^2)/2``."""
        return 0.5 * (self.p**2 + self.z**2)

    def as_vector(self) -> np.ndarray:
        return np.array([self.z, self.p, *self.spin], dtype=float)

    @classmethod
    def from_vector(cls, y: np.ndarray, tau: float = 0.0) -> "ClassicalState":
        return cls(y[0], y[1], (y[2], y[3], y[4]), tau)

    @classmethod
    def from_quantum(
        cls, coherent: CoherentInit, spin: SpinInit, params: SimParams
    ) -> "ClassicalState":
        """Classical counterpart of a coherent state times a spin state."""
        chi = spin.amplitudes(drive_field(params, 0.0))
        return cls(coherent.mean_z, coherent.mean_p, tuple(spin_vector(chi)), 0.0)

    @classmethod
    def ensemble(
        cls, n_spins: int, z: float, p: float, direction, tau: float = 0.0
    ) -> "ClassicalState":
        """``n_spins`` aligned spins along ``direction``: spin length ``n_spins/2``."""
        if n_spins < 1:
            raise ParameterError("n_spins", f"must be >= 1, got {n_spins}")
        unit = np.asarray(direction, dtype=float)
        norm = np.linalg.norm(unit)
        if norm == 0.0:
            raise ParameterError("direction", "spin direction must be nonzero")
        return cls(z, p, tuple(0.5 * n_spins * unit / norm), tau)


def _derivative(tau: float, y: np.ndarray, params: SimParams) -> np.ndarray:
    dphi, eps, _ = params.schedule.evaluate(tau)
    z, p, sx, sy, sz = y
    bz = -dphi + 2.0 * params.eta * z
    # S x (eps, 0, bz)
    return np.array(
        [p, -z + 2.0 * params.eta * sz, sy * bz, sz * eps - sx * bz, -sy * eps]
    )


def rhs(state: ClassicalState, params: SimParams, tau: float | None = None) -> ClassicalState:
    """Time derivative of ``state``; ``tau`` defaults to ``state.tau``."""
    tau = state.tau if tau is None else tau
    return ClassicalState.from_vector(_derivative(tau, state.as_vector(), params), tau)


def _flip(y: np.ndarray) -> np.ndarray:
    """Rotation by pi about x: ``(Sx, Sy, Sz) -> (Sx, -Sy, -Sz)``."""
    flipped = y.copy()
    flipped[3:] *= -1.0
    return flipped


@dataclass(eq=False)
class ClassicalTrajectory:
    """Sampled solution; ``spin`` has shape ``(n, 3)``."""

    taus: np.ndarray
    z: np.ndarray
    p: np.ndarray
    spin: np.ndarray

    def __len__(self) -> int:
        return len(self.taus)

    def state_at(self, index: int) -> ClassicalState:
        return ClassicalState(
            self.z[index], self.p[index], tuple(self.spin[index]), self.taus[index]
        )

    @property
    def final(self) -> ClassicalState:
        return self.state_at(-1)

    @property
    def spin_length(self) -> np.ndarray:
        return np.linalg.norm(self.spin, axis=1)

    def spin_drift_rate(self) -> float:
        """Largest relative change of ``|S|`` per unit tau."""
        span = abs(self.taus[-1] - self.taus[0])
        lengths = self.spin_length
        drift = float(np.max(np.abs(lengths - lengths[0])) / lengths[0])
        return drift / span if span > 0.0 else drift


class ClassicalSolver:
    """Adaptive Runge-Kutta (DOP853) integration of the classical equations."""

    class Meta:
        event_type = "propagation"
        signal_manager = SimulationSignalManager()

    def __init__(
        self,
        params: SimParams,
        rtol: float = DEFAULT_RTOL,
        atol: float = DEFAULT_ATOL,
        method: str = "DOP853",
    ):
        self.params = params
        self.rtol = rtol
        self.atol = atol
        self.method = method
        self.tau = 0.0
        self.n_evaluations = 0

    def _solve(self, y: np.ndarray, t_a: float, t_b: float, t_eval: np.ndarray):
        sol = solve_ivp(
            _derivative,
            (t_a, t_b),
            y,
            method=self.method,
            t_eval=t_eval if t_eval.size else None,
            args=(self.params,),
            rtol=self.rtol,
            atol=self.atol,
        )
        self.n_evaluations += sol.nfev
        if sol.status < 0:
            raise StiffnessError(float(sol.t[-1]) if sol.t.size else t_a, sol.message)
        return sol

    @EventProcessor.emits_event(data=["tau", "n_evaluations"])
    def integrate(
        self, init: ClassicalState, t_target: float, sample_dt: float
    ) -> ClassicalTrajectory:
        """Integrate from ``init.tau`` to ``t_target`` (either direction).

        Samples are taken at ``init.tau + k*sample_dt`` towards ``t_target``
        plus ``t_target`` itself. Integration restarts at every schedule
        breakpoint and pulse time; a sample landing on a pulse records the
        flipped spin.
        """
        if not sample_dt > 0.0:
            raise ParameterError("sample_dt", f"must be > 0, got {sample_dt}")
        schedule = self.params.schedule
        t0 = init.tau
        span = t_target - t0
        direction = 1.0 if span >= 0.0 else -1.0
        tol = 1e-12 * max(1.0, abs(t0), abs(t_target))
        for t in (t0, t_target):
            schedule.segment_at(t)

        n_samples = math.floor(abs(span) / sample_dt + 1e-9)
        samples = t0 + direction * sample_dt * np.arange(n_samples + 1)
        if abs(samples[-1] - t_target) > tol:
            samples = np.append(samples, t_target)

        lo, hi = sorted((t0, t_target))
        # Forwards a pulse flips on arrival; backwards it is undone on departure.
        pulses = set(schedule.pulses_between(lo, hi))
        inner = {t for t in schedule.breakpoints if lo < t < hi}
        cuts = sorted((inner | pulses | {t_target}) - {t0}, reverse=direction < 0.0)

        y = init.as_vector()
        taus, rows = [t0], [y.copy()]
        if direction < 0.0 and t0 in pulses:
            y = _flip(y)
        tau = t0
        self.tau = tau
        for t_cut in cuts:
            if direction * (t_cut - tau) <= tol:
                continue
            inside = samples[
                (direction * (samples - tau) > tol) & (direction * (t_cut - samples) > tol)
            ]
            sol = self._solve(y, tau, t_cut, np.append(inside, t_cut))
            taus.extend(sol.t[:-1].tolist())
            rows.extend(sol.y[:, :-1].T.copy())
            y = sol.y[:, -1]
            tau = t_cut
            self.tau = tau
            is_sample = bool(np.any(np.abs(samples - t_cut) <= tol))
            if direction > 0.0 and t_cut in pulses:
                y = _flip(y)
            if is_sample:
                taus.append(t_cut)
                rows.append(y.copy())
            if direction < 0.0 and t_cut in pulses:
                y = _flip(y)
            EventProcessor.emit(
                self,
                "INTEGRATE_PROGRESS",
                {"tau": tau, "t_target": t_target, "n_evaluations": self.n_evaluations},
            )

        data = np.array(rows)
        trajectory = ClassicalTrajectory(np.array(taus), data[:, 0], data[:, 1], data[:, 2:])
        logger.debug(
            "classical run {:.6g} -> {:.6g}: {} samples, {} evaluations, |S| drift {:.2e}/tau",
            t0,
            t_target,
            len(trajectory),
            self.n_evaluations,
            trajectory.spin_drift_rate(),
        )
        return trajectory


def integrate(
    init: ClassicalState,
    params: SimParams,
    t_target: float,
    sample_dt: float,
    rtol: float = DEFAULT_RTOL,
) -> ClassicalTrajectory:
    """Integrate the classical equations and sample every ``sample_dt``."""
    return ClassicalSolver(params, rtol=rtol).integrate(init, t_target, sample_dt)


def stationary_amplitude(
    params: SimParams,
    pp: PhysicalParams,
    init: ClassicalState,
    samples_per_period: int = 64,
) -> float:
    """Cantilever amplitude in meters at ``tau = Q_c``.

    The amplitude is the largest ``sqrt(z^2 + p^2)`` over the last cantilever
    period before ``Q_c``.
    """
    scaling = from_physical(pp)
    q_c = pp.quality_factor
    if q_c > params.schedule.t_end:
        raise ParameterError(
            "quality_factor",
            f"Q_c={q_c:.6g} beyond the schedule end {params.schedule.t_end:.6g}",
        )
    period = 2.0 * math.pi
    trajectory = integrate(init, params, q_c, period / samples_per_period)
    last = trajectory.taus >= q_c - period
    amplitude = float(np.max(np.hypot(trajectory.z[last], trajectory.p[last])))
    logger.info(
        "stationary amplitude at tau=Q_c={:.6g}: z={:.6g} ({:.4g} m)",
        q_c,
        amplitude,
        scaling.to_meters(amplitude),
    )
    return float(scaling.to_meters(amplitude))
