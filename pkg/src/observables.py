"""Physics read off density-matrix grids: Wigner function, marginals, cumulants and fits."""
from __future__ import annotations
import logging
import math
import typing as t
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import fft as sfft
from scipy.stats import linregress, norm

try:
    from .density_grid import DensityMatrixGrid
    from .errors import DomainError, IllConditionedError, UnnormalizedStateError
    from .physical_model import PhysicalParams
except ImportError:
    from density_grid import DensityMatrixGrid
    from errors import DomainError, IllConditionedError, UnnormalizedStateError
    from physical_model import PhysicalParams

logger = logging.getLogger(__name__)

MAX_CUMULANT_ORDER = 8
STENCIL_ACCURACY = 8
NORMALIZATION_TOLERANCE = 1e-6
MIN_FIT_POINTS = 10
TAIL_QUANTILES = (1e-2, 1e-3, 1e-4)
# default stable-index window, in units of -ln|chi|
TAIL_WINDOW = (0.05, 3.0)


@dataclass(frozen=True)
class WignerGrid:
    r: np.ndarray
    p: np.ndarray
    values: np.ndarray

    @property
    def nr(self) -> int:
        return len(self.r)

    @property
    def n_p(self) -> int:
        return len(self.p)

    @property
    def r_extent(self) -> float:
        return float(self.r[1] - self.r[0]) * self.nr

    @property
    def p_extent(self) -> float:
        return float(self.p[1] - self.p[0]) * self.n_p

    def position_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1) * (self.p[1] - self.p[0])

    def momentum_marginal(self) -> np.ndarray:
        return self.values.sum(axis=0) * (self.r[1] - self.r[0])

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.values**2) * (self.r[1] - self.r[0]) * (self.p[1] - self.p[0])))

    def to_frame(self, stride: int = 1) -> pd.DataFrame:
        """Long (r, p, W) triplets, every `stride`-th point along both axes."""
        rr, pp = np.meshgrid(self.r[::stride], self.p[::stride], indexing="ij")
        return pd.DataFrame({"r": rr.ravel(), "p": pp.ravel(), "W": self.values[::stride, ::stride].ravel()})


@dataclass(frozen=True)
class MomentumMarginal:
    momenta: np.ndarray
    density: np.ndarray

    @property
    def dp(self) -> float:
        return float(self.momenta[1] - self.momenta[0])

    def total(self) -> float:
        return float(self.density.sum() * self.dp)

    def characteristic_function(self, s: np.ndarray, hbar: float) -> np.ndarray:
        """chi(s) = sum_p f(p) exp(i p s / hbar) dp."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.exp(1j * np.outer(s, self.momenta) / hbar) @ self.density * self.dp

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"p": self.momenta, "density": self.density})


def _s_transform(values: np.ndarray, rho: DensityMatrixGrid, hbar: float,
                 workers: int | None) -> tuple[np.ndarray, np.ndarray]:
    """(1/2 pi hbar) int ds exp(-i p s / hbar) f(s) on the fftshifted p-grid, along the last axis."""
    grid = rho.spec
    k = 2.0 * np.pi * sfft.fftfreq(grid.ns, grid.ds)
    phase = np.exp(-1j * k * grid.s[0])
    out = sfft.fft(values, axis=-1, workers=workers) * phase * grid.ds / (2.0 * np.pi * hbar)
    return hbar * sfft.fftshift(k), sfft.fftshift(out, axes=-1)


def wigner_transform(rho: DensityMatrixGrid, p: PhysicalParams, workers: int | None = None) -> WignerGrid:
    momenta, w = _s_transform(rho.values, rho, p.hbar, workers)
    return WignerGrid(rho.spec.r, momenta, np.real(w))


def momentum_marginal(rho: DensityMatrixGrid, p: PhysicalParams, workers: int | None = None) -> MomentumMarginal:
    """int W dr, transformed from chi(s) directly instead of the full Wigner grid."""
    momenta, f = _s_transform(_characteristic(rho), rho, p.hbar, workers)
    return MomentumMarginal(momenta, np.real(f))


def _characteristic(rho: DensityMatrixGrid) -> np.ndarray:
    return rho.values.sum(axis=0) * rho.spec.dr


def _fd_weights(order: int, offsets: np.ndarray) -> np.ndarray:
    """Finite-difference weights for the `order`-th derivative at 0 (Fornberg's recursion)."""
    n = len(offsets)
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1, c4 = 1.0, offsets[0]
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, offsets[i]
        for j in range(i):
            c3 = offsets[i] - offsets[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def _log_derivatives(f: np.ndarray, center: int, spacing: float, max_order: int) -> dict[int, complex]:
    """d^n ln f at `center` for n = 1..max_order from a centered stencil."""
    half = STENCIL_ACCURACY // 2 + (max_order + 1) // 2
    if center - half < 0 or center + half >= len(f):
        raise DomainError(f"grid too small for a {2 * half + 1}-point stencil")
    window = f[center - half:center + half + 1]
    if np.any(window == 0):
        raise IllConditionedError("characteristic function vanishes inside the difference stencil")
    # unwrap from the center outwards so the phase is continuous through s = 0
    phase = np.angle(window)
    phase = np.concatenate([np.unwrap(phase[half::-1])[::-1], np.unwrap(phase[half:])[1:]])
    logf = np.log(np.abs(window)) + 1j * phase
    offsets = np.arange(-half, half + 1, dtype=float)
    return {n: complex(_fd_weights(n, offsets) @ logf) / spacing**n for n in range(1, max_order + 1)}


def momentum_cumulants(rho: DensityMatrixGrid, p: PhysicalParams, max_order: int = 4) -> dict[int, float]:
    """<<P^n>> = (-i hbar)^n d^n ln chi / ds^n at s = 0, chi(s) = int rho(r, s) dr."""
    if not 1 <= max_order <= MAX_CUMULANT_ORDER:
        raise DomainError(f"max_order must lie in [1, {MAX_CUMULANT_ORDER}], got {max_order}")
    chi = _characteristic(rho)
    grid = rho.spec
    chi0 = chi[grid.s0_index]
    if abs(chi0 - 1.0) > NORMALIZATION_TOLERANCE:
        raise UnnormalizedStateError(f"chi(0) = {chi0:.8g} differs from 1 by more than {NORMALIZATION_TOLERANCE}")
    derivs = _log_derivatives(chi, grid.s0_index, grid.ds, max_order)
    return {n: float(np.real((-1j * p.hbar) ** n * d)) for n, d in derivs.items()}


def _moments_to_cumulants(moments: list[float]) -> list[float]:
    """kappa_n = m_n - sum_{k<n} C(n-1, k-1) kappa_k m_{n-k}; moments[0] = m_0 = 1."""
    kappa = [0.0] * len(moments)
    for n in range(1, len(moments)):
        kappa[n] = moments[n] - sum(math.comb(n - 1, k - 1) * kappa[k] * moments[n - k] for k in range(1, n))
    return kappa


def coordinate_cumulants(rho: DensityMatrixGrid, p: PhysicalParams | None = None, max_order: int = 4) -> dict[int, float]:
    """Cumulants of the diagonal density rho(r, 0), from moments about the mean."""
    if not 1 <= max_order <= MAX_CUMULANT_ORDER:
        raise DomainError(f"max_order must lie in [1, {MAX_CUMULANT_ORDER}], got {max_order}")
    grid = rho.spec
    density = np.real(rho.diagonal())
    total = float(density.sum() * grid.dr)
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise UnnormalizedStateError(f"trace = {total:.8g} differs from 1 by more than {NORMALIZATION_TOLERANCE}")
    mean = float(np.sum(grid.r * density) * grid.dr)
    centered = grid.r - mean
    moments = [1.0] + [float(np.sum(centered**n * density) * grid.dr) for n in range(1, max_order + 1)]
    kappa = _moments_to_cumulants(moments)
    kappa[1] = mean
    return {n: kappa[n] for n in range(1, max_order + 1)}


@dataclass(frozen=True)
class DiffusionFit:
    exponent: float
    exponent_stderr: float
    prefactor: float
    prefactor_stderr: float
    slope: float
    slope_stderr: float
    window: tuple[float, float]
    r_squared: float
    n_points: int

    def as_row(self) -> dict:
        return {"nu": self.exponent, "nu_stderr": self.exponent_stderr, "prefactor": self.prefactor,
                "prefactor_stderr": self.prefactor_stderr, "slope": self.slope, "slope_stderr": self.slope_stderr,
                "t_start": self.window[0], "t_end": self.window[1], "r_squared": self.r_squared,
                "n_points": self.n_points}


@dataclass
class CumulantSeries:
    times: np.ndarray
    cumulants: dict[tuple[str, int], np.ndarray]
    fits: dict[tuple[str, int], DiffusionFit] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for key, values in self.cumulants.items():
            if len(values) != len(self.times):
                raise DomainError(f"cumulant {key} has {len(values)} values for {len(self.times)} times")

    def column(self, variable: str, order: int) -> np.ndarray:
        return np.asarray(self.cumulants[(variable, order)], dtype=float)

    def to_frame(self) -> pd.DataFrame:
        data = {"t": self.times}
        for (var, n) in sorted(self.cumulants):
            data[f"{var}{n}"] = self.column(var, n)
        return pd.DataFrame(data)


def cumulant_series(snapshots: t.Sequence[DensityMatrixGrid], p: PhysicalParams,
                    q_orders: t.Sequence[int] = (1, 2), p_orders: t.Sequence[int] = (2, 4)) -> CumulantSeries:
    """Coordinate and momentum cumulants of every snapshot, all orders from the same slices."""
    if not snapshots:
        raise DomainError("no snapshots to analyse")
    q_max = max(q_orders, default=0)
    p_max = max(p_orders, default=0)
    columns: dict[tuple[str, int], list[float]] = {("Q", n): [] for n in q_orders}
    columns.update({("P", n): [] for n in p_orders})
    for snap in snapshots:
        if q_max:
            qc = coordinate_cumulants(snap, p, q_max)
            for n in q_orders:
                columns[("Q", n)].append(qc[n])
        if p_max:
            pc = momentum_cumulants(snap, p, p_max)
            for n in p_orders:
                columns[("P", n)].append(pc[n])
    times = np.array([snap.time_stamp for snap in snapshots])
    return CumulantSeries(times, {k: np.array(v) for k, v in columns.items()})


def fit_power_law(times: np.ndarray, values: np.ndarray, window: tuple[float, float]) -> DiffusionFit:
    """ln y = nu ln t + ln A over the window, plus the plain linear slope dy/dt."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    if lo > hi or lo < times.min() or hi > times.max():
        raise DomainError(f"fit window [{lo}, {hi}] is not inside the sampled times [{times.min()}, {times.max()}]")
    sel = (times >= lo) & (times <= hi)
    if sel.sum() < MIN_FIT_POINTS:
        raise DomainError(f"fit window holds {int(sel.sum())} points, need at least {MIN_FIT_POINTS}")
    tt, yy = times[sel], values[sel]
    if np.any(tt <= 0) or np.any(yy <= 0):
        raise DomainError("log-log fit needs positive times and values throughout the window")
    loglog = linregress(np.log(tt), np.log(yy))
    lin = linregress(tt, yy)
    prefactor = math.exp(loglog.intercept)
    return DiffusionFit(float(loglog.slope), float(loglog.stderr), prefactor, prefactor * float(loglog.intercept_stderr),
                        float(lin.slope), float(lin.stderr), (float(lo), float(hi)), float(loglog.rvalue**2),
                        int(sel.sum()))


def fit_diffusion_exponent(series: CumulantSeries, window: tuple[float, float], variable: str = "Q",
                           order: int = 2) -> DiffusionFit:
    fit = fit_power_law(series.times, series.column(variable, order), window)
    series.fits[(variable, order)] = fit
    logger.info("<<%s^%d>> ~ t^nu: nu = %.4f +- %.4f, dy/dt = %.4g over t in [%.4g, %.4g]",
                variable, order, fit.exponent, fit.exponent_stderr, fit.slope, *fit.window)
    return fit


@dataclass(frozen=True)
class TailIndexFit:
    alpha: float
    alpha_stderr: float
    scale: float
    window: tuple[float, float]
    n_points: int


def _stable_index(chi_of: t.Callable[[np.ndarray], np.ndarray], width: float,
                  window: tuple[float, float] | None) -> TailIndexFit:
    """Regress ln(-ln|chi|) on ln|s|: for a stable law the slope is alpha."""
    if window is None:
        s = np.logspace(-2.0, 1.5, 200) / width
        chi = chi_of(s)
        minus_log = -np.log(np.clip(np.abs(chi), 1e-300, None))
        keep = (minus_log >= TAIL_WINDOW[0]) & (minus_log <= TAIL_WINDOW[1])
        if keep.sum() < 5:
            raise IllConditionedError("characteristic function never enters the default fitting window")
        s = s[keep]
    else:
        lo, hi = window
        if not 0 < lo < hi:
            raise DomainError(f"tail window must satisfy 0 < s_lo < s_hi, got {window}")
        s = np.geomspace(lo, hi, 40)
    chi = chi_of(s)
    if np.any(np.abs(chi) <= 0) or np.any(np.sign(chi.real) != np.sign(chi.real[0])):
        raise IllConditionedError("characteristic function crosses zero inside the fitting window")
    minus_log = -np.log(np.abs(chi))
    if np.any(minus_log <= 0):
        raise IllConditionedError("|chi| >= 1 inside the fitting window; distribution too narrow for it")
    fit = linregress(np.log(s), np.log(minus_log))
    return TailIndexFit(float(fit.slope), float(fit.stderr), math.exp(fit.intercept / fit.slope),
                        (float(s[0]), float(s[-1])), len(s))


def _interquartile(x: np.ndarray, density: np.ndarray, dx: float) -> float:
    cdf = np.cumsum(density) * dx
    cdf /= cdf[-1]
    return float(np.interp(0.75, cdf, x) - np.interp(0.25, cdf, x))


def stable_tail_index(marginal: MomentumMarginal, p: PhysicalParams,
                      window: tuple[float, float] | None = None) -> TailIndexFit:
    """Stability index of the momentum law from its characteristic function.

    `window` is a range of |s|; by default the s-range where -ln|chi| lies in
    [0.05, 3] is used.
    """
    total = marginal.total()
    if abs(total - 1.0) > 1e-3:
        raise UnnormalizedStateError(f"momentum marginal integrates to {total:.6g}")
    width = _interquartile(marginal.momenta, marginal.density, marginal.dp) / p.hbar
    fit = _stable_index(lambda s: marginal.characteristic_function(s, p.hbar), width, window)
    logger.debug("momentum stable index %.4f +- %.4f over s in [%.4g, %.4g]", fit.alpha, fit.alpha_stderr, *fit.window)
    return fit


def coordinate_tail_index(rho: DensityMatrixGrid, window: tuple[float, float] | None = None) -> TailIndexFit:
    """Same estimator applied to the coordinate distribution rho(r, 0), k conjugate to r."""
    grid = rho.spec
    density = np.real(rho.diagonal())
    total = float(density.sum() * grid.dr)
    if abs(total - 1.0) > 1e-3:
        raise UnnormalizedStateError(f"coordinate distribution integrates to {total:.6g}")
    mean = float(np.sum(grid.r * density) * grid.dr)

    def chi_of(k: np.ndarray) -> np.ndarray:
        return np.exp(1j * np.outer(k, grid.r - mean)) @ density * grid.dr

    return _stable_index(chi_of, _interquartile(grid.r, density, grid.dr), window)


def tail_exceedance(rho: DensityMatrixGrid, quantiles: t.Sequence[float] = TAIL_QUANTILES) -> pd.DataFrame:
    """Two-sided tail mass of rho(r, 0) beyond the Gaussian quantile thresholds, against the Gaussian."""
    grid = rho.spec
    density = np.real(rho.diagonal())
    total = float(density.sum() * grid.dr)
    mean = float(np.sum(grid.r * density) * grid.dr) / total
    sigma = math.sqrt(float(np.sum((grid.r - mean) ** 2 * density) * grid.dr) / total)
    rows = []
    for q in quantiles:
        z = float(norm.isf(0.5 * q))
        beyond = np.abs(grid.r - mean) > z * sigma
        empirical = float(density[beyond].sum() * grid.dr) / total
        rows.append({"quantile": q, "threshold": z * sigma, "empirical": empirical, "gaussian": q,
                     "ratio": empirical / q})
    return pd.DataFrame(rows)
