"""The (r, s) density-matrix grid and the initial states placed on it.

r = (X + Y)/2 and s = X - Y; both axes span [-L/2, L/2) uniformly and are
treated as periodic by every spectral routine.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass

import numpy as np

try:
    from .errors import DomainError
    from .physical_model import PhysicalParams
except ImportError:
    from errors import DomainError
    from physical_model import PhysicalParams

logger = logging.getLogger(__name__)


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    nr: int
    ns: int
    r_extent: float
    s_extent: float

    def __post_init__(self):
        for name in ("nr", "ns"):
            if not _is_power_of_two(int(getattr(self, name))):
                raise DomainError(f"grid.{name} must be a power of two, got {getattr(self, name)}")
        for name in ("r_extent", "s_extent"):
            if not getattr(self, name) > 0:
                raise DomainError(f"grid.{name} must be positive")

    @property
    def dr(self) -> float:
        return self.r_extent / self.nr

    @property
    def ds(self) -> float:
        return self.s_extent / self.ns

    @property
    def r(self) -> np.ndarray:
        return -0.5 * self.r_extent + self.dr * np.arange(self.nr)

    @property
    def s(self) -> np.ndarray:
        return -0.5 * self.s_extent + self.ds * np.arange(self.ns)

    @property
    def s0_index(self) -> int:
        return self.ns // 2

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r, self.s, indexing="ij")


@dataclass(frozen=True)
class DensityMatrixGrid:
    values: np.ndarray
    r_extent: float
    s_extent: float
    time_stamp: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 2:
            raise DomainError("density matrix values must be a 2-D (r, s) array")
        object.__setattr__(self, "values", v)
        GridSpec(v.shape[0], v.shape[1], self.r_extent, self.s_extent)

    @property
    def nr(self) -> int:
        return self.values.shape[0]

    @property
    def ns(self) -> int:
        return self.values.shape[1]

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.nr, self.ns, self.r_extent, self.s_extent)

    def with_values(self, values: np.ndarray, time_stamp: float | None = None) -> "DensityMatrixGrid":
        return DensityMatrixGrid(values, self.r_extent, self.s_extent,
                                 self.time_stamp if time_stamp is None else time_stamp)

    def diagonal(self) -> np.ndarray:
        return self.values[:, self.spec.s0_index]

    def trace(self) -> float:
        return float(np.real(self.diagonal().sum()) * self.spec.dr)

    def hermiticity_defect(self) -> float:
        mirror = (-np.arange(self.ns)) % self.ns
        return float(np.max(np.abs(self.values[:, mirror] - np.conj(self.values))))

    def l2_norm(self) -> float:
        g = self.spec
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * g.dr * g.ds))

    def off_diagonal_mass(self) -> float:
        mask = np.ones(self.ns, dtype=bool)
        mask[self.spec.s0_index] = False
        return float(np.sum(np.abs(self.values[:, mask]) ** 2))

    def boundary_headroom(self) -> float:
        """Largest edge amplitude relative to the peak (r and s edges)."""
        a = np.abs(self.values)
        peak = a.max()
        if peak == 0:
            return 0.0
        edge = max(a[0, :].max(), a[-1, :].max(), a[:, 0].max(), a[:, -1].max())
        return float(edge / peak)


def gaussian_mixed_state(grid: GridSpec, hbar: float, q0: float, sigma_q: float, sigma_p: float,
                         p0: float = 0.0, time_stamp: float = 0.0) -> DensityMatrixGrid:
    """Gaussian state with position spread sigma_q and momentum spread sigma_p.

    Physical (positive) when sigma_q * sigma_p >= hbar / 2; equality is the pure state.
    """
    if sigma_q <= 0 or sigma_p <= 0:
        raise DomainError("Gaussian state widths must be positive")
    if sigma_q * sigma_p < 0.5 * hbar * (1.0 - 1e-12):
        raise DomainError(f"sigma_q * sigma_p = {sigma_q * sigma_p:.6g} violates the uncertainty bound hbar/2")
    r, s = grid.mesh()
    norm = 1.0 / math.sqrt(2.0 * math.pi * sigma_q**2)
    values = norm * np.exp(-((r - q0) ** 2) / (2.0 * sigma_q**2)
                           - (sigma_p**2) * s**2 / (2.0 * hbar**2)
                           + 1j * p0 * s / hbar)
    return DensityMatrixGrid(values, grid.r_extent, grid.s_extent, time_stamp)


def gaussian_pure_state(grid: GridSpec, hbar: float, q0: float, sigma: float, p0: float = 0.0,
                        time_stamp: float = 0.0) -> DensityMatrixGrid:
    return gaussian_mixed_state(grid, hbar, q0, sigma, hbar / (2.0 * sigma), p0, time_stamp)


def thermal_state(grid: GridSpec, p: PhysicalParams, q0: float, sigma_q: float, p0: float = 0.0) -> DensityMatrixGrid:
    """Gaussian mixture whose momentum variance is the Maxwellian M*T."""
    return gaussian_mixed_state(grid, p.hbar, q0, sigma_q, math.sqrt(p.mass * p.temperature), p0)


def coherent_state(grid: GridSpec, p: PhysicalParams, stiffness: float, q0: float, p0: float = 0.0) -> DensityMatrixGrid:
    return coherent_state_at(grid, p, stiffness, q0, p0, 0.0)


def coherent_state_at(grid: GridSpec, p: PhysicalParams, stiffness: float, q0: float, p0: float,
                      t: float) -> DensityMatrixGrid:
    """Exact harmonic-oscillator evolution of a coherent state (no bath)."""
    omega = math.sqrt(stiffness / p.mass)
    sigma = math.sqrt(p.hbar / (2.0 * p.mass * omega))
    qt = q0 * math.cos(omega * t) + p0 / (p.mass * omega) * math.sin(omega * t)
    pt = p0 * math.cos(omega * t) - p.mass * omega * q0 * math.sin(omega * t)
    return gaussian_pure_state(grid, p.hbar, qt, sigma, pt, time_stamp=t)
