"""Observables and cat-state structure extracted from spinor snapshots."""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from loguru import logger
from scipy import ndimage, optimize

from .errors import AnalysisError, DecompositionError
from .grid import GridSpec
from .model import SimParams, effective_field
from .quantum import PAULI, SpinorField, spin_vector

DEFAULT_PEAK_THRESHOLD = 1e-8
MERGE_GAP_POINTS = 3
CANTILEVER_PERIOD = 2.0 * math.pi


@dataclass(frozen=True)
class Observables:
    tau: float
    mean_z: float
    std_z: float
    spin_expect: np.ndarray
    pop_up: float
    pop_down: float


class Densities(NamedTuple):
    P: np.ndarray
    P1: np.ndarray
    P2: np.ndarray


def density(state: SpinorField) -> Densities:
    """``P = |Psi_1|^2 + |Psi_2|^2`` and the per-component densities."""
    P1 = np.abs(state.psi1) ** 2
    P2 = np.abs(state.psi2) ** 2
    return Densities(P1 + P2, P1, P2)


def reduced_spin_density(psi: np.ndarray, dz: float) -> np.ndarray:
    """``rho_ij = integral Psi_i(z) Psi_j(z)^* dz`` over the given samples."""
    return psi @ psi.conj().T * dz


def observables(state: SpinorField) -> Observables:
    """Grid-quadrature moments of z and the spin expectation values."""
    z = state.grid.z
    dz = state.grid.dz
    P = density(state).P
    norm = float(P.sum() * dz)
    mean = float(np.sum(z * P) * dz / norm)
    var = float(np.sum((z - mean) ** 2 * P) * dz / norm)
    rho = reduced_spin_density(state.psi, dz) / norm
    spin = 0.5 * np.real(np.einsum("kij,ji->k", PAULI, rho))
    return Observables(
        tau=state.tau,
        mean_z=mean,
        std_z=math.sqrt(max(var, 0.0)),
        spin_expect=spin,
        pop_up=float(rho[0, 0].real),
        pop_down=float(rho[1, 1].real),
    )


@dataclass(frozen=True)
class PeakSupport:
    """Contiguous index range ``[i_lo, i_hi]`` holding one peak of P."""

    i_lo: int
    i_hi: int
    z_lo: float
    z_hi: float
    weight: float
    centroid: float

    @property
    def slice(self) -> slice:
        return slice(self.i_lo, self.i_hi + 1)

    def overlaps(self, other: "PeakSupport") -> bool:
        return self.i_lo <= other.i_hi and other.i_lo <= self.i_hi


def _support(P: np.ndarray, grid: GridSpec, i_lo: int, i_hi: int) -> PeakSupport:
    window = P[i_lo : i_hi + 1]
    z = grid.z[i_lo : i_hi + 1]
    mass = float(window.sum())
    centroid = float(np.sum(z * window) / mass) if mass > 0.0 else float(z.mean())
    return PeakSupport(
        i_lo, i_hi, float(grid.z[i_lo]), float(grid.z[i_hi]), mass * grid.dz, centroid
    )


def detect_peaks(
    P: np.ndarray, grid: GridSpec, threshold_frac: float = DEFAULT_PEAK_THRESHOLD
) -> list[PeakSupport]:
    """Connected regions where ``P > threshold_frac * max(P)``, heaviest first.

    Regions separated by fewer than three grid points are merged.
    """
    if not 0.0 < threshold_frac < 1.0:
        raise AnalysisError(f"threshold_frac must lie in (0, 1), got {threshold_frac}")
    P = np.asarray(P, dtype=float)
    peak = float(P.max()) if P.size else 0.0
    if peak <= 0.0:
        return []
    labels, count = ndimage.label(P > threshold_frac * peak)
    ranges: list[list[int]] = []
    for region in ndimage.find_objects(labels)[:count]:
        lo, hi = region[0].start, region[0].stop - 1
        if ranges and lo - ranges[-1][1] - 1 < MERGE_GAP_POINTS:
            ranges[-1][1] = hi
        else:
            ranges.append([lo, hi])
    supports = [_support(P, grid, lo, hi) for lo, hi in ranges]
    return sorted(supports, key=lambda s: s.weight, reverse=True)


@dataclass(frozen=True)
class PeakComponent:
    support: PeakSupport
    spinor: np.ndarray
    chi: np.ndarray
    spin: np.ndarray

    @property
    def weight(self) -> float:
        return self.support.weight

    @property
    def centroid(self) -> float:
        return self.support.centroid


@dataclass(frozen=True)
class PeakDecomposition:
    """Big/small peak structure ``Psi = Psi_b chi_b + Psi_s chi_s``.

    ``kappa`` is the real least-squares ratio ``Psi_1^s / Psi_2^s`` on the small
    peak; ``kappa_residual`` is the relative rms of ``Psi_1^s - kappa Psi_2^s``
    over the small-peak spinor, so a non-real ratio shows up in the residual.
    A single-peak state has ``n_peaks == 1`` and ``small is None``.
    """

    tau: float
    n_peaks: int
    big: PeakComponent
    small: PeakComponent | None
    kappa: float
    kappa_complex: complex
    kappa_residual: float
    kappa_imag_ratio: float
    kappa_big: float
    chi_overlap: float

    @property
    def w_big(self) -> float:
        return self.big.weight

    @property
    def w_small(self) -> float:
        return self.small.weight if self.small is not None else 0.0

    @property
    def chi_big(self) -> np.ndarray:
        return self.big.chi

    @property
    def chi_small(self) -> np.ndarray | None:
        return self.small.chi if self.small is not None else None

    @property
    def spin_big(self) -> np.ndarray:
        return self.big.spin

    @property
    def spin_small(self) -> np.ndarray | None:
        return self.small.spin if self.small is not None else None


def _dominant_spin_state(spinor: np.ndarray) -> np.ndarray:
    """Unit spin state best reproducing ``spinor`` as ``f(z) chi``."""
    _, vectors = np.linalg.eigh(spinor @ spinor.conj().T)
    chi = vectors[:, -1]
    pivot = chi[np.argmax(np.abs(chi))]
    return chi * (abs(pivot) / pivot)


def _component(state: SpinorField, support: PeakSupport) -> PeakComponent:
    spinor = state.psi[:, support.slice]
    chi = _dominant_spin_state(spinor)
    return PeakComponent(support, spinor, chi, spin_vector(chi))


def decompose(state: SpinorField, peaks: Sequence[PeakSupport]) -> PeakDecomposition:
    """Split the spinor over two peak supports and measure ``kappa``."""
    if not peaks:
        raise DecompositionError("no peak supports given")
    if len(peaks) > 2:
        raise DecompositionError(f"expected at most two peak supports, got {len(peaks)}")
    if len(peaks) == 2 and peaks[0].overlaps(peaks[1]):
        raise DecompositionError(
            f"peak supports overlap: [{peaks[0].z_lo}, {peaks[0].z_hi}] and "
            f"[{peaks[1].z_lo}, {peaks[1].z_hi}]"
        )
    ordered = sorted(peaks, key=lambda s: s.weight, reverse=True)
    big = _component(state, ordered[0])

    kappa_big_c = _ratio(-big.spinor[1], big.spinor[0])
    small_weight = ordered[1].weight if len(ordered) == 2 else 0.0
    if small_weight <= 0.0 or not np.any(state.psi[:, ordered[1].slice]):
        return PeakDecomposition(
            tau=state.tau,
            n_peaks=1,
            big=big,
            small=None,
            kappa=math.nan,
            kappa_complex=complex(math.nan, math.nan),
            kappa_residual=math.nan,
            kappa_imag_ratio=math.nan,
            kappa_big=float(kappa_big_c.real),
            chi_overlap=math.nan,
        )

    small = _component(state, ordered[1])
    psi1_s, psi2_s = small.spinor
    kappa_c = _ratio(psi1_s, psi2_s)
    kappa = float(kappa_c.real)
    total = float(np.sum(np.abs(small.spinor) ** 2))
    residual = math.sqrt(float(np.sum(np.abs(psi1_s - kappa * psi2_s) ** 2)) / total)
    imag_ratio = abs(kappa_c.imag) / abs(kappa_c) if abs(kappa_c) > 0.0 else 0.0
    return PeakDecomposition(
        tau=state.tau,
        n_peaks=2,
        big=big,
        small=small,
        kappa=kappa,
        kappa_complex=kappa_c,
        kappa_residual=residual,
        kappa_imag_ratio=imag_ratio,
        kappa_big=float(kappa_big_c.real),
        chi_overlap=float(abs(np.vdot(big.chi, small.chi))),
    )


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> complex:
    """Least-squares ``k`` minimising ``sum |numerator - k*denominator|^2``."""
    weight = float(np.sum(np.abs(denominator) ** 2))
    if weight == 0.0:
        return complex(math.inf, 0.0)
    return complex(np.vdot(denominator, numerator) / weight)


def branching_ratio(dec: PeakDecomposition) -> float:
    """Small-to-big integrated weight ratio (0 for a single peak)."""
    if dec.small is None:
        return 0.0
    return dec.w_small / dec.w_big


def theoretical_branching_ratio(theta: float) -> float:
    """``tan^2(theta/2)`` for an initial angle ``theta`` between spin and field."""
    return math.tan(0.5 * theta) ** 2


def angle_between(u, v) -> float:
    """Angle in radians between two 3-vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(math.atan2(np.linalg.norm(np.cross(u, v)), float(np.dot(u, v))))


def misalignment_angle(spin, field) -> float:
    """Angle between a spin expectation vector and a field vector."""
    return angle_between(spin, field)


def field_branching_ratio(state: SpinorField, field) -> float:
    """Spin population opposite to ``field`` over the population along it.

    ``inf`` when nothing lies along the field.
    """
    field = np.asarray(field, dtype=float)
    rho = reduced_spin_density(state.psi, state.grid.dz)
    projector = np.einsum("k,kij->ij", field / np.linalg.norm(field), PAULI)
    values, vectors = np.linalg.eigh(projector)
    opposite, along = vectors[:, 0], vectors[:, -1]
    p_along = float(np.real(np.vdot(along, rho @ along)))
    p_opposite = float(np.real(np.vdot(opposite, rho @ opposite)))
    if p_along <= 0.0:
        return math.inf
    return p_opposite / p_along


def alignment_angles(dec: PeakDecomposition, params: SimParams) -> tuple[float, float]:
    """Angle of ``spin_big`` to the effective field at the big-peak centroid, and of
    ``spin_small`` to the reversed field at its own centroid (nan without a small peak)."""
    big_field = effective_field(params, dec.tau, dec.big.centroid).vector
    big_angle = angle_between(dec.spin_big, big_field)
    if dec.small is None:
        return big_angle, math.nan
    small_field = effective_field(params, dec.tau, dec.small.centroid).vector
    return big_angle, angle_between(dec.spin_small, -small_field)


def select_peak(state: SpinorField, support: PeakSupport) -> SpinorField:
    """State after the cantilever is found in ``support``: restricted and renormalised."""
    psi = np.zeros_like(state.psi)
    psi[:, support.slice] = state.psi[:, support.slice]
    norm = math.sqrt(float(np.sum(np.abs(psi) ** 2)) * state.grid.dz)
    if norm == 0.0:
        raise AnalysisError("selected peak carries no probability")
    return SpinorField(state.grid, psi / norm, state.tau)


def envelope(taus, values, period: float = CANTILEVER_PERIOD) -> np.ndarray:
    """Sliding maximum of ``|values|`` over one period of uniformly spaced samples."""
    taus = np.asarray(taus, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    if values.size < 2:
        return values.copy()
    spacing = float(np.median(np.diff(taus)))
    size = max(1, int(round(period / spacing)))
    return ndimage.maximum_filter1d(values, size=size, mode="nearest")


@dataclass(frozen=True)
class PhaseFit:
    """``mean_z ~ amplitude * (1 + drift*(tau - tau_a)) * cos(tau + phase)``."""

    amplitude: float
    phase: float
    drift: float
    fit_window: tuple[float, float]
    residual_rms: float
    relative_residual: float
    n_samples: int
    reliable: bool


def wrap_phase(angle: float) -> float:
    """Map an angle to ``(-pi, pi]``."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


def phase_difference(phase_a: float, phase_b: float) -> float:
    """Absolute phase difference folded into ``[0, pi]``."""
    return abs(wrap_phase(phase_a - phase_b))


def fit_phase(
    series,
    window: tuple[float, float],
    drift: bool = True,
    residual_limit: float = 0.1,
) -> PhaseFit:
    """Least-squares cantilever phase over ``window``.

    Args:
        series: ``(tau, mean_z)`` pairs.
        window: ``(tau_a, tau_b)`` spanning at least three periods.
        drift: Include the linear amplitude drift term.
        residual_limit: Relative rms above which the fit is flagged unreliable.

    Raises:
        AnalysisError: The window is too short or holds too few samples.
    """
    data = np.asarray(series, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise AnalysisError("series must be a sequence of (tau, mean_z) pairs")
    tau_a, tau_b = float(window[0]), float(window[1])
    span = tau_b - tau_a
    if span < 3.0 * CANTILEVER_PERIOD * (1.0 - 1e-9):
        raise AnalysisError(f"fit window {span:.4g} is shorter than three periods")
    mask = (data[:, 0] >= tau_a) & (data[:, 0] <= tau_b)
    taus, values = data[mask, 0], data[mask, 1]
    needed = int(math.floor(20.0 * span / CANTILEVER_PERIOD))
    if taus.size < needed:
        raise AnalysisError(
            f"{taus.size} samples in window, need at least {needed} (20 per period)"
        )

    rel = taus - tau_a
    columns = [np.cos(taus), np.sin(taus)]
    if drift:
        columns += [rel * np.cos(taus), rel * np.sin(taus)]
    coeffs, *_ = np.linalg.lstsq(np.column_stack(columns), values, rcond=None)
    amplitude = math.hypot(coeffs[0], coeffs[1])
    phase = math.atan2(-coeffs[1], coeffs[0])
    slope = 0.0
    if drift and amplitude > 0.0:
        slope = (coeffs[2] * math.cos(phase) - coeffs[3] * math.sin(phase)) / amplitude

    def model(x):
        a, b, ph = x
        return a * (1.0 + b * rel) * np.cos(taus + ph)

    if drift:
        result = optimize.least_squares(
            lambda x: model(x) - values,
            x0=[amplitude, slope, phase],
            xtol=1e-14,
            ftol=1e-14,
            gtol=1e-14,
        )
        amplitude, slope, phase = (float(v) for v in result.x)
    if amplitude < 0.0:
        amplitude, phase = -amplitude, phase + math.pi
    phase = wrap_phase(phase)

    residual = model([amplitude, slope, phase]) - values
    rms = float(np.sqrt(np.mean(residual**2)))
    scale = float(np.sqrt(np.mean(values**2)))
    relative = rms / scale if scale > 0.0 else math.inf
    fit = PhaseFit(
        amplitude=amplitude,
        phase=phase,
        drift=slope,
        fit_window=(tau_a, tau_b),
        residual_rms=rms,
        relative_residual=relative,
        n_samples=int(taus.size),
        reliable=relative < residual_limit,
    )
    if not fit.reliable:
        logger.warning(
            "phase fit on [{:.4g}, {:.4g}] has relative residual {:.3g}",
            tau_a,
            tau_b,
            relative,
        )
    return fit


@dataclass(frozen=True)
class StateSummary:
    """Everything the runner records about one state."""

    observables: Observables
    peaks: tuple[PeakSupport, ...]
    decomposition: PeakDecomposition | None
    angle_big: float = math.nan
    angle_small: float = math.nan

    @property
    def tau(self) -> float:
        return self.observables.tau

    @property
    def n_peaks(self) -> int:
        return len(self.peaks)


def summarize(
    state: SpinorField,
    params: SimParams | None = None,
    threshold_frac: float = DEFAULT_PEAK_THRESHOLD,
) -> StateSummary:
    """Observables, peaks and, when at most two peaks exist, their decomposition."""
    obs = observables(state)
    peaks = tuple(detect_peaks(density(state).P, state.grid, threshold_frac))
    dec = None
    if 1 <= len(peaks) <= 2:
        dec = decompose(state, peaks)
    elif len(peaks) > 2:
        logger.debug("tau={:.6g}: {} peaks, skipping decomposition", state.tau, len(peaks))
    angles = (math.nan, math.nan)
    if dec is not None and params is not None:
        angles = alignment_angles(dec, params)
    return StateSummary(obs, peaks, dec, *angles)
