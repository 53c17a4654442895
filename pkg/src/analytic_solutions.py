"""Closed-form and quadrature reference solutions for free motion.

These are the oracles the PDE evolver is checked against: the free-motion
propagator for an arbitrary initial density matrix, the infinite-mass
(decoherence only) limit, and the equilibrium momentum cumulant formulas.
"""
from __future__ import annotations
import logging
import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import fft as sfft
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.special import factorial2

try:
    from .density_grid import DensityMatrixGrid
    from .errors import AliasingError, DomainError, OutOfDomainError
    from .physical_model import CorrelatorSpec, PhysicalParams, correlator_deriv, correlator_eval
except ImportError:
    from density_grid import DensityMatrixGrid
    from errors import AliasingError, DomainError, OutOfDomainError
    from physical_model import CorrelatorSpec, PhysicalParams, correlator_deriv, correlator_eval

logger = logging.getLogger(__name__)

GL_ORDER = 16
GL_PANEL_WIDTH = 0.5          # in units of X0
K_LIMIT_FACTOR = 1e-8         # |k| < K_LIMIT_FACTOR * hbar/ds -> analytic k -> 0 branch
CONTENT_THRESHOLD = 1e-10     # momentum columns below this (relative) carry no amplitude
STATIONARY_PANEL = 0.25       # quadrature panel for ln chi_eq, in units of X0
STATIONARY_SCAN = 4096
LOG_UNDERFLOW = -745.0

_GL_NODES, _GL_WEIGHTS = leggauss(GL_ORDER)


def decoherence_limit(rho0: DensityMatrixGrid, p: PhysicalParams, g: CorrelatorSpec, t: float) -> DensityMatrixGrid:
    if t < 0:
        raise DomainError(f"time must be non-negative, got {t}")
    s = rho0.spec.s
    factor = np.exp((p.spreading_width * t / p.hbar) * (np.asarray(correlator_eval(g, s / p.correlation_length)) - 1.0))
    return rho0.with_values(rho0.values * factor[np.newaxis, :], rho0.time_stamp + t)


def _momentum_axis(rho0: DensityMatrixGrid, hbar: float) -> np.ndarray:
    return 2.0 * np.pi * hbar * sfft.fftfreq(rho0.nr, rho0.spec.dr)


def _occupied_kmax(rho_k: np.ndarray, k: np.ndarray) -> float:
    weight = np.sqrt(np.sum(np.abs(rho_k) ** 2, axis=1))
    if weight.max() == 0:
        return 0.0
    occupied = weight > CONTENT_THRESHOLD * weight.max()
    return float(np.max(np.abs(k[occupied])))


def max_safe_time(rho0: DensityMatrixGrid, p: PhysicalParams) -> float:
    """Largest t whose shift k*t/M stays inside half the s-domain for every occupied k."""
    k = _momentum_axis(rho0, p.hbar)
    kmax = _occupied_kmax(sfft.fft(rho0.values, axis=0), k)
    if kmax == 0.0:
        return math.inf
    return p.mass * 0.5 * rho0.s_extent / kmax


def window_mean(g: CorrelatorSpec, x0: float, s: np.ndarray, shift: float) -> np.ndarray:
    """Mean of G(s'/X0) - 1 over s' in [s - shift, s], Gauss-Legendre panels.

    Panel count grows with the window length so the relative error stays near 1e-9
    for smooth correlators.
    """
    length = abs(shift)
    if length == 0.0:
        return np.asarray(correlator_eval(g, s / x0)) - 1.0
    panels = max(1, math.ceil(length / (GL_PANEL_WIDTH * x0)))
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    u = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    # s' runs from s - shift (u = 0) to s (u = 1)
    sp = s[:, None] - shift * (1.0 - u[None, :])
    vals = np.asarray(correlator_eval(g, sp / x0)) - 1.0
    return vals @ w


def free_propagate(rho0: DensityMatrixGrid, p: PhysicalParams, g: CorrelatorSpec, t: float,
                   interpolation: str = "fourier", workers: int | None = None) -> DensityMatrixGrid:
    """Free-motion (U = 0) solution for an arbitrary initial density matrix.

    rho(k, s, t) = rho0(k, s - k t/M) * exp[(Gamma M / hbar k) * int_{s-kt/M}^{s} (G(s'/X0) - 1) ds'],
    with k the momentum conjugate to r. The prefactor times the window integral is
    (Gamma t / hbar) times the window mean of G - 1, so the k -> 0 column reduces to
    (Gamma t / hbar)(G(s/X0) - 1).
    """
    if t < 0:
        raise DomainError(f"time must be non-negative, got {t}")
    if t == 0:
        return rho0.with_values(rho0.values.copy())
    if interpolation not in ("fourier", "cubic"):
        raise DomainError(f"unknown interpolation {interpolation!r}")
    grid = rho0.spec
    s = grid.s
    k = _momentum_axis(rho0, p.hbar)
    rho_k = sfft.fft(rho0.values, axis=0, workers=workers)

    kmax = _occupied_kmax(rho_k, k)
    if kmax * t / p.mass >= 0.5 * grid.s_extent:
        safe = max_safe_time(rho0, p)
        raise AliasingError(
            f"shift k*t/M = {kmax * t / p.mass:.4g} exceeds half the s-domain ({0.5 * grid.s_extent:.4g}); "
            f"enlarge s_extent or keep t below {safe:.4g}")

    shifts = k * t / p.mass
    if interpolation == "fourier":
        ks = 2.0 * np.pi * sfft.fftfreq(grid.ns, grid.ds)
        spec_s = sfft.fft(rho_k, axis=1, workers=workers)
        shifted = sfft.ifft(spec_s * np.exp(-1j * np.outer(shifts, ks)), axis=1, workers=workers)
    else:
        shifted = np.empty_like(rho_k)
        for i, a in enumerate(shifts):
            re = CubicSpline(s, rho_k[i].real)(s - a, extrapolate=False)
            im = CubicSpline(s, rho_k[i].imag)(s - a, extrapolate=False)
            shifted[i] = np.nan_to_num(re) + 1j * np.nan_to_num(im)

    rate = p.spreading_width * t / p.hbar
    k_limit = K_LIMIT_FACTOR * p.hbar / grid.ds
    exponent = np.empty((grid.nr, grid.ns))
    g_minus_1 = np.asarray(correlator_eval(g, s / p.correlation_length)) - 1.0
    for i, a in enumerate(shifts):
        if abs(k[i]) < k_limit:
            exponent[i] = rate * g_minus_1
        else:
            exponent[i] = rate * window_mean(g, p.correlation_length, s, a)

    values = sfft.ifft(shifted * np.exp(exponent), axis=0, workers=workers)
    return rho0.with_values(values, rho0.time_stamp + t)


def _cumulant_term(n: int, p: PhysicalParams) -> float:
    dfact = float(factorial2(2 * n - 1, exact=True))
    return dfact / n * (p.mass * p.correlation_length**2 / (p.hbar**2 * p.beta)) * (p.hbar / p.correlation_length) ** (2 * n)


def momentum_cumulant_formula(n: int, p: PhysicalParams) -> float:
    """Quoted equilibrium even cumulant <<P^2n>> for the Gaussian correlator (n >= 2)."""
    if int(n) != n or n < 2:
        raise DomainError(f"the even-cumulant formula is stated for n >= 2, got n = {n}")
    n = int(n)
    return (-1) ** (n - 1) * _cumulant_term(n, p)


def maxwellian_comparator(p: PhysicalParams) -> float:
    """The cumulant formula continued to n = 1 (equals M*T)."""
    return _cumulant_term(1, p)


def equilibrium_p2(p: PhysicalParams) -> float:
    return 2.0 * p.mass * p.temperature


def stationary_momentum_cumulant(n: int, p: PhysicalParams) -> float:
    """<<P^2n>> of the stationary free momentum distribution, Gaussian correlator.

    Read off the series of ln chi_eq; the signs alternate, n = 1 gives M T and
    n >= 2 coincides with the quoted formula.
    """
    if int(n) != n or n < 1:
        raise DomainError(f"cumulant order index must be >= 1, got {n}")
    n = int(n)
    return (-1) ** (n - 1) * _cumulant_term(n, p)


def _stationary_edge(g: CorrelatorSpec, x_max: float) -> float:
    """First x > 0 at which G' is no longer negative (inf if none up to x_max)."""
    if g.family == "quadratic-truncated":
        return 2.0
    if g.family == "levy" and g.completion == "clamped":
        return (1.0 - g.lower_clamp) ** (1.0 / g.alpha)
    x = np.linspace(0.0, x_max, STATIONARY_SCAN + 1)[1:]
    stalled = (np.asarray(correlator_deriv(g, x)) >= 0.0) & (np.asarray(correlator_eval(g, x)) < 1.0)
    return float(x[np.argmax(stalled)]) if stalled.any() else math.inf


def equilibrium_characteristic_function(s: np.ndarray | float, p: PhysicalParams, g: CorrelatorSpec) -> np.ndarray | float:
    """Stationary chi(s) = int rho dr of free motion.

    Integrated over r the kinetic term drops out and friction balances
    decoherence:

        d ln chi / dx = (2 M X0^2 / beta hbar^2) (1 - G(x)) / G'(x),    x = |s| / X0.

    chi is zero from the first x where G' stops being negative.
    """
    amplitude = 2.0 * p.mass * p.correlation_length**2 / (p.beta * p.hbar**2)
    sa = np.atleast_1d(np.abs(np.asarray(s, dtype=float))) / p.correlation_length
    x_max = float(sa.max()) if sa.size else 0.0
    if x_max > g.domain:
        raise OutOfDomainError(f"|s|/X0 = {x_max:.6g} lies beyond the tabulated correlator end {g.domain:.6g}")
    edge = _stationary_edge(g, x_max) if x_max > 0 else math.inf

    def integrand(x: float) -> float:
        if x == 0.0:
            return 0.0
        return (1.0 - float(correlator_eval(g, x))) / min(float(correlator_deriv(g, x)), -1e-300)

    out = np.zeros_like(sa)
    log_chi, reached = 0.0, 0.0
    for i in np.argsort(sa):
        upper = sa[i]
        if upper >= edge or log_chi < LOG_UNDERFLOW:
            continue
        while reached < upper and log_chi >= LOG_UNDERFLOW:
            nxt = min(upper, reached + STATIONARY_PANEL)
            val, _ = quad(integrand, reached, nxt, limit=200, epsabs=1e-13, epsrel=1e-11)
            log_chi += amplitude * val
            reached = nxt
        out[i] = math.exp(log_chi) if log_chi >= LOG_UNDERFLOW else 0.0
    return float(out[0]) if np.ndim(s) == 0 else out
