"""Spinor wavefunction of the spin-cantilever system and its propagation.

The state is ``Psi(z) = (Psi_1(z), Psi_2(z))`` sampled on a uniform periodic
grid, with component 1 the spin-up amplitude. ``SplitStepPropagator`` advances
it with a symmetric (Strang) splitting: half a kinetic step in momentum space,
a full potential-plus-spin step evaluated at the step midpoint, half a kinetic
step. The spin factor at each grid point is the exact 2x2 exponential

    exp(i (B . sigma) h/2) = cos(|B|h/2) + i sin(|B|h/2) (B/|B|) . sigma

``FockOracle`` integrates the same Hamiltonian in a truncated number basis and
serves as an independent check on small problems.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from loguru import logger
from scipy import fft as sfft
from scipy import stats
from scipy.integrate import solve_ivp

from .enums import SpinInitKind
from .errors import GridError, ParameterError, PropagationError, TruncationError
from .grid import GridSpec
from .managers import SimulationSignalManager
from .model import COHERENT_SIGMA, EffectiveField, SimParams, drive_field
from .processors import EventProcessor

__all__ = [
    "PAULI",
    "CoherentInit",
    "FockOracle",
    "GridSpec",
    "Leakage",
    "SpinInit",
    "SpinorField",
    "SplitStepPropagator",
    "bloch_state",
    "init_state",
    "leakage",
    "oracle_propagate_fock",
    "propagate",
    "spin_vector",
    "step",
]

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

EDGE_FRACTION = 0.05


def bloch_state(theta: float, phi: float = 0.0) -> np.ndarray:
    """Spin-1/2 state pointing at polar angle ``theta``, azimuth ``phi``."""
    return np.array(
        [math.cos(theta / 2.0), np.exp(1j * phi) * math.sin(theta / 2.0)], dtype=complex
    )


def spin_vector(chi: np.ndarray) -> np.ndarray:
    """``<S>`` of a (not necessarily normalised) two-component spin state."""
    chi = np.asarray(chi, dtype=complex)
    rho = np.outer(chi, chi.conj()) / np.vdot(chi, chi).real
    return 0.5 * np.real(np.einsum("kij,ji->k", PAULI, rho))


@dataclass(frozen=True)
class SpinInit:
    """Initial spin preparation; ``theta``/``phi`` are used by ``CUSTOM`` only."""

    kind: SpinInitKind
    theta: float = 0.0
    phi: float = 0.0

    def amplitudes(self, field: EffectiveField | None = None) -> np.ndarray:
        """Unit two-component spin state.

        ``ALONG_EFF``/``OPPOSITE_EFF`` need the field: they are the eigenvectors of
        ``B . S`` with positive/negative eigenvalue.
        """
        match self.kind:
            case SpinInitKind.UP:
                return np.array([1.0, 0.0], dtype=complex)
            case SpinInitKind.DOWN:
                return np.array([0.0, 1.0], dtype=complex)
            case SpinInitKind.PLUS_X:
                return np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)
            case SpinInitKind.CUSTOM:
                return bloch_state(self.theta, self.phi)
            case SpinInitKind.ALONG_EFF | SpinInitKind.OPPOSITE_EFF:
                if field is None:
                    raise ParameterError("spin", f"{self.kind.value} needs the effective field")
                bx, by, bz = (float(c) for c in (field.bx, field.by, field.bz))
                if bx == by == bz == 0.0:
                    raise ParameterError("spin", "effective field vanishes at tau=0")
                theta = math.atan2(math.hypot(bx, by), bz)
                phi = math.atan2(by, bx)
                if self.kind is SpinInitKind.OPPOSITE_EFF:
                    theta, phi = math.pi - theta, phi + math.pi
                return bloch_state(theta, phi)
        raise ParameterError("spin", f"unsupported spin init {self.kind!r}")


@dataclass(frozen=True)
class CoherentInit:
    """Coherent cantilever state ``|alpha>``."""

    alpha: complex

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        if abs(self.alpha) ** 2 < 10.0:
            logger.warning(
                "|alpha|^2 = {:.3g} < 10: the cantilever is far from the classical limit",
                abs(self.alpha) ** 2,
            )

    @property
    def mean_z(self) -> float:
        return math.sqrt(2.0) * self.alpha.real

    @property
    def mean_p(self) -> float:
        return math.sqrt(2.0) * self.alpha.imag

    def wavefunction(self, z: np.ndarray) -> np.ndarray:
        """Position representation of ``D(alpha)|0>``."""
        z0, p0 = self.mean_z, self.mean_p
        return np.pi**-0.25 * np.exp(
            -0.5 * (z - z0) ** 2 + 1j * p0 * z - 0.5j * p0 * z0
        )

    def fock_amplitudes(self, n_max: int) -> np.ndarray:
        """``A_n = exp(-|alpha|^2/2) alpha^n / sqrt(n!)`` for ``n = 0..n_max``."""
        n = np.arange(n_max + 1)
        mean = abs(self.alpha) ** 2
        amps = np.sqrt(stats.poisson.pmf(n, mean)).astype(complex)
        return amps * np.exp(1j * n * np.angle(self.alpha))

    def truncation_leakage(self, n_max: int) -> float:
        """Poisson weight above ``n_max``."""
        return float(stats.poisson.sf(n_max, abs(self.alpha) ** 2))


@dataclass(eq=False)
class SpinorField:
    """Two-component wavefunction on a grid at time ``tau``."""

    grid: GridSpec
    psi: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape != (2, self.grid.n_points):
            raise ParameterError(
                "psi", f"shape {self.psi.shape} != (2, {self.grid.n_points})"
            )

    @property
    def psi1(self) -> np.ndarray:
        return self.psi[0]

    @property
    def psi2(self) -> np.ndarray:
        return self.psi[1]

    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dz)

    def copy(self) -> "SpinorField":
        return SpinorField(self.grid, self.psi.copy(), self.tau)

    def overlap(self, other: "SpinorField") -> complex:
        """``<self|other>`` by grid quadrature."""
        return complex(np.vdot(self.psi, other.psi) * self.grid.dz)


class Leakage(NamedTuple):
    norm_defect: float
    edge_mass: float


def leakage(state: SpinorField, edge_fraction: float = EDGE_FRACTION) -> Leakage:
    """``|1 - norm|`` and the probability near the grid edges.

    ``edge_fraction`` of the points is taken at each end, so the default 0.05
    covers 10% of the grid.
    """
    density = np.sum(np.abs(state.psi) ** 2, axis=0) * state.grid.dz
    left, right = state.grid.edge_slices(edge_fraction)
    edge = float(density[left].sum() + density[right].sum())
    return Leakage(abs(1.0 - float(density.sum())), edge)


def init_state(
    grid: GridSpec, coherent: CoherentInit, spin: SpinInit, params: SimParams
) -> SpinorField:
    """Coherent cantilever state times the requested spin state at ``tau = 0``."""
    if grid.dz >= COHERENT_SIGMA / 4.0:
        raise GridError(
            "n_points",
            f"dz={grid.dz:.4g} does not resolve the coherent packet "
            f"(need dz < {COHERENT_SIGMA / 4.0:.4g})",
        )
    chi = spin.amplitudes(drive_field(params, 0.0))
    chi = chi / np.linalg.norm(chi)
    packet = coherent.wavefunction(grid.z)
    packet /= math.sqrt(np.sum(np.abs(packet) ** 2) * grid.dz)
    state = SpinorField(grid, chi[:, None] * packet[None, :], 0.0)
    logger.debug(
        "initial state: <z>={:.4g} <p>={:.4g} spin={}",
        coherent.mean_z,
        coherent.mean_p,
        np.round(spin_vector(chi), 6).tolist(),
    )
    return state


def _flip(psi: np.ndarray) -> np.ndarray:
    """Instantaneous pi rotation about x: ``i sigma_x``."""
    return 1j * psi[::-1].copy()


class SplitStepPropagator:
    """Strang split-operator propagator for ``H = p^2/2 + z^2/2 - B_eff . S``."""

    class Meta:
        event_type = "propagation"
        signal_manager = SimulationSignalManager()

    def __init__(
        self,
        params: SimParams,
        workers: int = 1,
        progress_every: int = 64,
        check_every: int = 4096,
    ):
        self.params = params
        self.grid = params.grid
        self.workers = workers
        self.progress_every = progress_every
        self.check_every = check_every
        self.tau = 0.0
        self.steps_taken = 0
        self._kinetic_cache: dict[float, np.ndarray] = {}
        self._z = self.grid.z
        self._half_z2 = 0.5 * self._z**2

    def _kinetic(self, h: float) -> np.ndarray:
        phase = self._kinetic_cache.get(h)
        if phase is None:
            phase = np.exp(-0.5j * self.grid.k**2 * h)
            if len(self._kinetic_cache) > 64:
                self._kinetic_cache.clear()
            self._kinetic_cache[h] = phase
        return phase

    def _apply_kinetic(self, psi: np.ndarray, h: float) -> np.ndarray:
        spectrum = sfft.fft(psi, axis=-1, workers=self.workers)
        spectrum *= self._kinetic(h)
        return sfft.ifft(spectrum, axis=-1, workers=self.workers)

    def _apply_potential_spin(self, psi: np.ndarray, tau_mid: float, h: float) -> None:
        dphi, eps, _ = self.params.schedule.evaluate(tau_mid)
        bz = -dphi + 2.0 * self.params.eta * self._z
        half_angle = 0.5 * h * np.sqrt(eps * eps + bz * bz)
        c = np.cos(half_angle)
        # sin(|B|h/2)/|B| without dividing by |B|
        s = 1j * (0.5 * h) * np.sinc(half_angle / np.pi)
        up, down = psi[0], psi[1]
        new_up = c * up + s * (bz * up + eps * down)
        new_down = c * down + s * (eps * up - bz * down)
        phase = np.exp(-1j * h * self._half_z2)
        psi[0] = new_up * phase
        psi[1] = new_down * phase

    def _check_finite(self, psi: np.ndarray, tau: float) -> None:
        if not np.isfinite(psi).all():
            raise PropagationError(tau)

    def _advance(self, psi: np.ndarray, tau: float, dtau: float, n_steps: int) -> np.ndarray:
        """``n_steps`` Strang steps with the inner kinetic half steps fused."""
        psi = self._apply_kinetic(psi, 0.5 * dtau)
        for i in range(n_steps):
            self._apply_potential_spin(psi, tau + (i + 0.5) * dtau, dtau)
            h = dtau if i < n_steps - 1 else 0.5 * dtau
            psi = self._apply_kinetic(psi, h)
            if (self.steps_taken + i + 1) % self.check_every == 0:
                self._check_finite(psi, tau + (i + 1) * dtau)
        self.steps_taken += n_steps
        self._check_finite(psi, tau + n_steps * dtau)
        return psi

    def step(self, state: SpinorField, dtau: float) -> SpinorField:
        """One symmetric splitting step of length ``dtau``."""
        if not dtau > 0.0:
            raise ParameterError("dtau", f"must be > 0, got {dtau}")
        psi = self._advance(state.psi.copy(), state.tau, dtau, 1)
        self.tau = state.tau + dtau
        return SpinorField(state.grid, psi, self.tau)

    @EventProcessor.emits_event(data=["tau", "steps_taken"])
    def propagate(
        self,
        state: SpinorField,
        t_target: float,
        snapshot_taus=(),
        *,
        sample_taus=(),
        on_sample=None,
    ) -> tuple[SpinorField, list[SpinorField]]:
        """Propagate to ``t_target``, landing exactly on every requested time.

        Args:
            state: Starting state (not modified).
            t_target: Final time, at most ``params.t_end``.
            snapshot_taus: Sorted times in ``[state.tau, t_target]`` recorded by copy.
            sample_taus: Times at which ``on_sample`` is called with the live state.
            on_sample: Callback receiving a ``SpinorField`` that must not be kept.

        Returns:
            Final state and the list of snapshots.
        """
        snapshot_taus = [float(t) for t in snapshot_taus]
        t0 = state.tau
        tol = 1e-12 * max(1.0, abs(t_target))
        if t_target > self.params.t_end + tol:
            raise ParameterError("t_target", f"{t_target} beyond t_end={self.params.t_end}")
        if t_target < t0 - tol:
            raise ParameterError("t_target", f"{t_target} before state tau={t0}")
        if snapshot_taus != sorted(snapshot_taus):
            raise ParameterError("snapshot_taus", "snapshot times must be sorted")
        if snapshot_taus and (snapshot_taus[0] < t0 - tol or snapshot_taus[-1] > t_target + tol):
            raise ParameterError(
                "snapshot_taus", f"snapshot times must lie in [{t0}, {t_target}]"
            )

        snapshot_set = set(snapshot_taus)
        sample_set = {float(t) for t in sample_taus if t0 - tol <= t <= t_target + tol}
        pulse_set = set(self.params.schedule.pulses_between(t0, t_target))
        events = sorted(snapshot_set | sample_set | pulse_set | {float(t_target)})

        psi = state.psi.copy()
        tau = t0
        self.tau = tau
        snapshots: list[SpinorField] = []
        logger.debug(
            "propagating {:.6g} -> {:.6g} with dt={:.3g} ({} stop points)",
            t0,
            t_target,
            self.params.dt,
            len(events),
        )
        for index, t_event in enumerate(events):
            span = t_event - tau
            if span > tol:
                n_steps = max(1, math.ceil(span / self.params.dt - 1e-9))
                psi = self._advance(psi, tau, span / n_steps, n_steps)
            tau = max(tau, t_event)
            self.tau = tau
            if t_event in pulse_set:
                psi = _flip(psi)
            if t_event in snapshot_set:
                snapshots.append(SpinorField(self.grid, psi.copy(), tau))
            if on_sample is not None and t_event in sample_set:
                on_sample(SpinorField(self.grid, psi, tau))
            if self.progress_every and (index + 1) % self.progress_every == 0:
                EventProcessor.emit(
                    self,
                    "PROPAGATE_PROGRESS",
                    {"tau": tau, "t_target": t_target, "steps_taken": self.steps_taken},
                )

        final = SpinorField(self.grid, psi, tau)
        report = leakage(final)
        if report.edge_mass > 1e-8:
            logger.warning(
                "edge mass {:.3e} at tau={:.6g}: the grid may be too small",
                report.edge_mass,
                tau,
            )
        return final, snapshots


def step(state: SpinorField, params: SimParams, dtau: float) -> SpinorField:
    """Advance ``state`` by one splitting step of length ``dtau``."""
    return SplitStepPropagator(params).step(state, dtau)


def propagate(
    state: SpinorField, params: SimParams, t_target: float, snapshot_taus=()
) -> tuple[SpinorField, list[SpinorField]]:
    """Propagate ``state`` to ``t_target``, returning the final state and snapshots."""
    return SplitStepPropagator(params).propagate(state, t_target, snapshot_taus)


def hermite_functions(n_max: int, z: np.ndarray) -> np.ndarray:
    """Oscillator eigenfunctions ``phi_0..phi_n_max`` on ``z`` (three-term recurrence)."""
    phi = np.zeros((n_max + 1, z.size))
    phi[0] = np.pi**-0.25 * np.exp(-0.5 * z**2)
    if n_max >= 1:
        phi[1] = math.sqrt(2.0) * z * phi[0]
    for n in range(1, n_max):
        phi[n + 1] = math.sqrt(2.0 / (n + 1)) * z * phi[n] - math.sqrt(n / (n + 1)) * phi[n - 1]
    return phi


class FockOracle:
    """Dense integration of the Schrodinger equation in ``spin x {|0>..|n_max>}``.

    Intended for small ``|alpha|`` and short times; amplitudes are ordered
    ``(spin, n)`` with spin index 0 = up.
    """

    class Meta:
        event_type = "propagation"
        signal_manager = SimulationSignalManager()

    def __init__(
        self,
        params: SimParams,
        n_max: int,
        leakage_tol: float = 1e-10,
        rtol: float = 1e-12,
        atol: float = 1e-12,
        checks_per_unit: int = 20,
    ):
        if n_max < 1:
            raise ParameterError("n_max", f"must be >= 1, got {n_max}")
        self.params = params
        self.n_max = n_max
        self.leakage_tol = leakage_tol
        self.rtol = rtol
        self.atol = atol
        self.checks_per_unit = checks_per_unit
        self.tau = 0.0
        self.max_tail_weight = 0.0

        levels = np.arange(n_max + 1)
        lowering = np.diag(np.sqrt(levels[1:].astype(float)), k=1)
        eye_spin = np.eye(2)
        z_op = (lowering + lowering.T) / math.sqrt(2.0)
        spin_z = 0.5 * PAULI[2].real
        spin_x = 0.5 * PAULI[0].real
        eye_osc = np.eye(n_max + 1)
        self._h_osc = np.kron(eye_spin, np.diag(levels + 0.5))
        self._sz = np.kron(spin_z, eye_osc)
        self._sx = np.kron(spin_x, eye_osc)
        self._sz_z = np.kron(spin_z, z_op)
        self._tail = slice(max(1, n_max + 1 - max(2, (n_max + 1) // 16)), n_max + 1)

    def hamiltonian(self, tau: float) -> np.ndarray:
        dphi, eps, _ = self.params.schedule.evaluate(tau)
        return (
            self._h_osc
            + dphi * self._sz
            - eps * self._sx
            - 2.0 * self.params.eta * self._sz_z
        )

    def initial_amplitudes(self, coherent: CoherentInit, spin: SpinInit) -> np.ndarray:
        initial_leak = coherent.truncation_leakage(self.n_max)
        if initial_leak > self.leakage_tol:
            raise TruncationError(initial_leak, 0.0, self.n_max)
        chi = spin.amplitudes(drive_field(self.params, 0.0))
        chi = chi / np.linalg.norm(chi)
        return np.outer(chi, coherent.fock_amplitudes(self.n_max))

    def tail_weight(self, amps: np.ndarray) -> float:
        return float(np.sum(np.abs(amps[:, self._tail]) ** 2))

    def _rhs(self, tau: float, y: np.ndarray) -> np.ndarray:
        return -1j * (self.hamiltonian(tau) @ y)

    def _integrate(self, y: np.ndarray, t_a: float, t_b: float) -> np.ndarray:
        n_checks = max(2, math.ceil((t_b - t_a) * self.checks_per_unit) + 1)
        sol = solve_ivp(
            self._rhs,
            (t_a, t_b),
            y,
            method="DOP853",
            t_eval=np.linspace(t_a, t_b, n_checks),
            rtol=self.rtol,
            atol=self.atol,
        )
        if not sol.success:
            raise PropagationError(float(sol.t[-1]), sol.message)
        for tau, column in zip(sol.t, sol.y.T, strict=True):
            weight = self.tail_weight(column.reshape(2, -1))
            self.max_tail_weight = max(self.max_tail_weight, weight)
            if weight > self.leakage_tol:
                raise TruncationError(weight, float(tau), self.n_max)
        return sol.y[:, -1]

    @EventProcessor.emits_event(data=["tau", "n_max", "max_tail_weight"])
    def evolve(self, coherent: CoherentInit, spin: SpinInit, t_target: float) -> np.ndarray:
        """Fock amplitudes, shape ``(2, n_max + 1)``, at ``t_target``."""
        amps = self.initial_amplitudes(coherent, spin)
        schedule = self.params.schedule
        cuts = sorted(
            {0.0, float(t_target)}
            | {t for t in schedule.breakpoints if 0.0 < t < t_target}
            | set(schedule.pulses_between(0.0, t_target))
        )
        y = amps.reshape(-1)
        for t_a, t_b in zip(cuts, cuts[1:], strict=False):
            y = self._integrate(y, t_a, t_b)
            if t_b in schedule.pulse_times:
                y = _flip(y.reshape(2, -1)).reshape(-1)
            self.tau = t_b
        if self.max_tail_weight > 0.1 * self.leakage_tol:
            logger.warning(
                "Fock tail weight {:.3e} is close to the truncation limit {:.1e}",
                self.max_tail_weight,
                self.leakage_tol,
            )
        return y.reshape(2, -1)

    def to_grid(self, amps: np.ndarray, grid: GridSpec, tau: float) -> SpinorField:
        basis = hermite_functions(self.n_max, grid.z)
        return SpinorField(grid, amps @ basis, tau)


def oracle_propagate_fock(
    coherent: CoherentInit,
    spin: SpinInit,
    params: SimParams,
    n_max: int,
    t_target: float,
) -> SpinorField:
    """Number-basis reference solution projected onto ``params.grid``."""
    oracle = FockOracle(params, n_max)
    amps = oracle.evolve(coherent, spin, t_target)
    return oracle.to_grid(amps, params.grid, t_target)
