"""Physical parameters, bath correlators and external potentials.

Everything here is immutable and evaluation is pure, so the same specs can be
shared by any number of workers. Numbers are in a self-consistent unit system
chosen by the user ("natural units, hbar-value explicit").
"""
from __future__ import annotations
import logging
import math
import typing as t
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

try:
    from .errors import DomainError, OutOfDomainError, SingularDerivativeError
except ImportError:
    from errors import DomainError, OutOfDomainError, SingularDerivativeError

logger = logging.getLogger(__name__)

ArrayLike = t.Union[float, np.ndarray]

CORRELATOR_FAMILIES = ("gaussian", "quadratic-truncated", "levy", "tabulated")
LEVY_COMPLETIONS = ("clamped", "exponential")
POTENTIAL_KINDS = ("free", "linear", "harmonic", "parabolic-barrier", "double-well", "tabulated")

# centered stencil for tabulated correlators: (G(x+h) - G(x-h)) / 2h
TABULATED_FD_STEP = 1e-6


@dataclass(frozen=True)
class PhysicalParams:
    mass: float
    hbar: float
    temperature: float
    spreading_width: float
    correlation_length: float

    def __post_init__(self):
        for name in ("mass", "hbar", "temperature", "spreading_width", "correlation_length"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise DomainError(f"PhysicalParams.{name} must be a finite positive number, got {value!r}")

    @property
    def beta(self) -> float:
        return 1.0 / self.temperature


def toward_classical(p: PhysicalParams, factor: float) -> PhysicalParams:
    """Scale hbar by `factor` and the spreading width by 1/factor.

    Gamma*hbar/X0**2 is unchanged, so friction and diffusion stay put while
    the momentum quantum hbar/X0 shrinks with the factor.
    """
    if factor <= 0:
        raise DomainError(f"scaling factor must be positive, got {factor}")
    return replace(p, hbar=p.hbar * factor, spreading_width=p.spreading_width / factor)


def _as_output(x_in: ArrayLike, out: np.ndarray) -> ArrayLike:
    return float(out) if np.ndim(x_in) == 0 else out


@dataclass(frozen=True)
class CorrelatorSpec:
    family: str = "gaussian"
    alpha: float = 2.0
    completion: str = "clamped"
    lower_clamp: float = -1.0
    table_x: tuple[float, ...] = ()
    table_g: tuple[float, ...] = ()
    _spline: t.Any = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in CORRELATOR_FAMILIES:
            raise DomainError(f"unknown correlator family {self.family!r}; expected one of {CORRELATOR_FAMILIES}")
        if self.family == "levy":
            if not (0.0 < self.alpha <= 2.0):
                raise DomainError(f"levy exponent alpha must lie in (0, 2], got {self.alpha}")
            if self.completion not in LEVY_COMPLETIONS:
                raise DomainError(f"unknown levy completion {self.completion!r}")
            if not (-1.0 <= self.lower_clamp < 1.0):
                raise DomainError(f"lower_clamp must lie in [-1, 1), got {self.lower_clamp}")
        if self.family == "tabulated":
            object.__setattr__(self, "_spline", _mirrored_spline(self.table_x, self.table_g))

    @property
    def singular_at_origin(self) -> bool:
        return self.family == "levy" and self.alpha <= 1.0

    @property
    def domain(self) -> float:
        """Largest |x| the correlator accepts."""
        return float(self.table_x[-1]) if self.family == "tabulated" else math.inf


def _mirrored_spline(table_x: t.Sequence[float], table_g: t.Sequence[float]) -> CubicSpline:
    x = np.asarray(table_x, dtype=float)
    g = np.asarray(table_g, dtype=float)
    if x.ndim != 1 or x.shape != g.shape or len(x) < 4:
        raise DomainError("tabulated correlator needs matching 1-D tables with at least 4 points")
    if x[0] != 0.0 or np.any(np.diff(x) <= 0):
        raise DomainError("tabulated correlator abscissae must start at 0 and increase strictly")
    if g[0] != 1.0:
        raise DomainError(f"tabulated correlator must satisfy G(0) = 1, got {g[0]}")
    if np.any(np.abs(g) > 1.0):
        raise DomainError("tabulated correlator values must satisfy |G| <= 1")
    # mirror about 0 so the interpolant is even by construction
    xs = np.concatenate([-x[:0:-1], x])
    gs = np.concatenate([g[:0:-1], g])
    return CubicSpline(xs, gs, bc_type="not-a-knot")


def correlator_eval(spec: CorrelatorSpec, x: ArrayLike) -> ArrayLike:
    """G(x) for the correlator family.

    The levy family is written in |x|**alpha, not |x|**alpha / 2: at alpha = 2 the
    clamped form is quadratic-truncated at sqrt(2) x and the exponential one is
    gaussian at sqrt(2) x, so G''(0) = -2 there against -1 for those families.
    """
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise DomainError("correlator argument must be finite")
    ax = np.abs(xa)
    if spec.family == "gaussian":
        out = np.exp(-0.5 * ax**2)
    elif spec.family == "quadratic-truncated":
        out = np.maximum(1.0 - 0.5 * ax**2, -1.0)
    elif spec.family == "levy":
        power = ax**spec.alpha
        if spec.completion == "exponential":
            out = np.exp(-power)
        else:
            out = np.maximum(1.0 - power, spec.lower_clamp)
    else:
        if np.any(ax > spec.domain):
            raise OutOfDomainError(f"tabulated correlator queried at |x| = {ax.max():.6g} beyond table end {spec.domain:.6g}")
        out = spec._spline(ax)
        out = np.where(ax == 0.0, 1.0, np.clip(out, -1.0, 1.0))
    return _as_output(x, np.asarray(out, dtype=float))


def correlator_deriv(spec: CorrelatorSpec, x: ArrayLike) -> ArrayLike:
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise DomainError("correlator argument must be finite")
    ax = np.abs(xa)
    sign = np.sign(xa)
    if spec.family == "gaussian":
        out = -xa * np.exp(-0.5 * xa**2)
    elif spec.family == "quadratic-truncated":
        out = np.where(ax < 2.0, -xa, 0.0)
    elif spec.family == "levy":
        if spec.singular_at_origin and np.any(xa == 0.0):
            raise SingularDerivativeError(f"levy correlator with alpha = {spec.alpha} has no derivative at x = 0")
        a = spec.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(ax > 0.0, a * ax ** (a - 1.0), 0.0)
        if spec.completion == "exponential":
            out = -sign * slope * np.exp(-(ax**a))
        else:
            out = np.where(1.0 - ax**a > spec.lower_clamp, -sign * slope, 0.0)
    else:
        h = TABULATED_FD_STEP
        out = (np.asarray(correlator_eval(spec, xa + h)) - np.asarray(correlator_eval(spec, xa - h))) / (2.0 * h)
    return _as_output(x, np.asarray(out, dtype=float))


@dataclass(frozen=True)
class PotentialSpec:
    kind: str = "free"
    slope: float = 0.0
    stiffness: float = 0.0
    a: float = 1.0
    b: float = 1.0
    table_q: tuple[float, ...] = ()
    table_u: tuple[float, ...] = ()
    _spline: t.Any = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise DomainError(f"unknown potential kind {self.kind!r}; expected one of {POTENTIAL_KINDS}")
        if self.kind in ("harmonic", "parabolic-barrier") and self.stiffness <= 0:
            raise DomainError(f"{self.kind} potential needs a positive stiffness, got {self.stiffness}")
        if self.kind == "double-well" and (self.a <= 0 or self.b <= 0):
            raise DomainError("double-well potential needs positive a and b")
        if self.kind == "tabulated":
            q = np.asarray(self.table_q, dtype=float)
            u = np.asarray(self.table_u, dtype=float)
            if q.ndim != 1 or q.shape != u.shape or len(q) < 4 or np.any(np.diff(q) <= 0):
                raise DomainError("tabulated potential needs increasing abscissae and matching values (>= 4 points)")
            if not np.all(np.isfinite(u)):
                raise DomainError("tabulated potential values must be finite")
            object.__setattr__(self, "_spline", CubicSpline(q, u))

    @property
    def is_free(self) -> bool:
        return self.kind == "free"

    def _check_domain(self, q: np.ndarray) -> None:
        if self.kind == "tabulated":
            lo, hi = self.table_q[0], self.table_q[-1]
            if np.any(q < lo) or np.any(q > hi):
                raise OutOfDomainError(f"tabulated potential defined on [{lo}, {hi}], queried outside")


def potential_eval(spec: PotentialSpec, q: ArrayLike) -> ArrayLike:
    qa = np.asarray(q, dtype=float)
    spec._check_domain(qa)
    if spec.kind == "free":
        out = np.zeros_like(qa)
    elif spec.kind == "linear":
        out = spec.slope * qa
    elif spec.kind == "harmonic":
        out = 0.5 * spec.stiffness * qa**2
    elif spec.kind == "parabolic-barrier":
        out = -0.5 * spec.stiffness * qa**2
    elif spec.kind == "double-well":
        out = 0.25 * spec.b * (qa**2 - spec.a**2) ** 2
    else:
        out = spec._spline(qa)
    return _as_output(q, np.asarray(out, dtype=float))


def potential_deriv(spec: PotentialSpec, q: ArrayLike) -> ArrayLike:
    qa = np.asarray(q, dtype=float)
    spec._check_domain(qa)
    if spec.kind == "free":
        out = np.zeros_like(qa)
    elif spec.kind == "linear":
        out = np.full_like(qa, spec.slope)
    elif spec.kind == "harmonic":
        out = spec.stiffness * qa
    elif spec.kind == "parabolic-barrier":
        out = -spec.stiffness * qa
    elif spec.kind == "double-well":
        out = spec.b * qa * (qa**2 - spec.a**2)
    else:
        out = spec._spline(qa, 1)
    return _as_output(q, np.asarray(out, dtype=float))
