"""Uniform periodic grid for the cantilever coordinate."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridError


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``z_k = z_min + k*dz`` with ``dz = (z_max - z_min)/n_points``.

    The right end point is excluded, so the grid is periodic and FFT friendly.
    """

    z_min: float
    z_max: float
    n_points: int

    def __post_init__(self):
        if not (np.isfinite(self.z_min) and np.isfinite(self.z_max)):
            raise GridError("z_min", "grid bounds must be finite")
        if self.z_min >= self.z_max:
            raise GridError("z_max", f"z_max={self.z_max} must exceed z_min={self.z_min}")
        n = int(self.n_points)
        if n != self.n_points or n < 2 or n & (n - 1):
            raise GridError(
                "n_points", f"n_points={self.n_points} must be a power of two >= 2"
            )

    @property
    def length(self) -> float:
        return self.z_max - self.z_min

    @property
    def dz(self) -> float:
        return self.length / self.n_points

    @property
    def p_max(self) -> float:
        """Largest momentum the grid resolves (Nyquist)."""
        return np.pi / self.dz

    @cached_property
    def z(self) -> np.ndarray:
        return self.z_min + self.dz * np.arange(self.n_points)

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dz)

    def resolves_momentum(self, p_max: float) -> bool:
        return self.dz < np.pi / abs(p_max)

    def check_momentum(self, p_max: float) -> None:
        """Raise ``GridError`` unless ``dz < pi/p_max``."""
        if not self.resolves_momentum(p_max):
            raise GridError(
                "n_points",
                f"dz={self.dz:.4g} does not resolve momentum {p_max:.4g} "
                f"(need dz < {np.pi / abs(p_max):.4g})",
            )

    def edge_slices(self, fraction: float = 0.05) -> tuple[slice, slice]:
        """Index ranges of the outermost ``fraction`` of points at each end.

        The default watches 5% of the grid at either end, 10% in total.
        """
        width = max(1, int(round(fraction * self.n_points)))
        return slice(0, width), slice(self.n_points - width, self.n_points)

    def index_of(self, z: float) -> int:
        return int(np.clip(np.floor((z - self.z_min) / self.dz), 0, self.n_points - 1))
