"""Direct integration of the kinetic equation for rho(r, s, t).

In r = (X + Y)/2, s = X - Y the generator reads

    i hbar d_t rho = [ -(hbar^2/M) d_r d_s + U(r + s/2) - U(r - s/2)
                       + i (beta Gamma hbar^2 / 2 X0 M) G'(s/X0) d_s
                       + i Gamma (G(s/X0) - 1) ] rho

and is advanced on a periodic grid by Strang splitting: the mixed kinetic term
exactly in double-Fourier space, the local terms as pointwise exponentials and
the friction term along its characteristics in s.
"""
from __future__ import annotations
import dataclasses
import functools
import logging
import math
import typing as t
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import fft as sfft
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import eigvalsh
from tqdm import tqdm

try:
    from .density_grid import DensityMatrixGrid, GridSpec
    from .errors import DomainError, NumericalAbort, TransformationMismatch
    from .physical_model import (CorrelatorSpec, PhysicalParams, PotentialSpec, correlator_deriv,
                                 correlator_eval, potential_eval)
except ImportError:
    from density_grid import DensityMatrixGrid, GridSpec
    from errors import DomainError, NumericalAbort, TransformationMismatch
    from physical_model import (CorrelatorSpec, PhysicalParams, PotentialSpec, correlator_deriv,
                                correlator_eval, potential_eval)

logger = logging.getLogger(__name__)

SCHEMES = ("strang-split", "rk4-spectral")
HEADROOM = 1e-4            # edge amplitude relative to peak (4 decades)
FRICTION_SUBSTEPS = 4


@dataclass(frozen=True)
class GeneratorTerms:
    kinetic: bool = True
    friction: bool = True
    decoherence: bool = True
    potential: bool = True

    @classmethod
    def infinite_mass(cls) -> "GeneratorTerms":
        return cls(kinetic=False, friction=False)


@dataclass(frozen=True)
class SolverOptions:
    dt: float
    n_steps: int
    scheme: str = "strang-split"
    snapshot_stride: int = 1
    dealias: bool = False
    trace_tolerance: float = 1e-6
    hermiticity_tolerance: float = 1e-6
    terms: GeneratorTerms = field(default_factory=GeneratorTerms)
    absorb_width: float = 0.0
    workers: int | None = None
    positivity_check: bool = False
    progress: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"solver.dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise DomainError(f"solver.n_steps must be >= 1, got {self.n_steps}")
        if self.snapshot_stride < 1:
            raise DomainError(f"solver.snapshot_stride must be >= 1, got {self.snapshot_stride}")
        if self.scheme not in SCHEMES:
            raise DomainError(f"solver.scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not (0.0 <= self.absorb_width < 0.5):
            raise DomainError("solver.absorb_width is a fraction of r_extent in [0, 0.5)")


@dataclass
class Trajectory:
    snapshots: list[DensityMatrixGrid]
    conservation: pd.DataFrame
    provenance: dict
    stopped_early: bool = False
    diagnostic: str = ""
    positivity: list[tuple[float, float]] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([snap.time_stamp for snap in self.snapshots])

    @property
    def final(self) -> DensityMatrixGrid:
        return self.snapshots[-1]


@dataclass(frozen=True)
class GeneratorForm:
    """The (r, s) generator with its coefficients and the verification outcome."""
    equation: str
    kinetic_coefficient: float
    friction_coefficient: float
    decoherence_rate: float
    max_relative_mismatch: float
    n_trials: int


EQUATION_RS = ("i hbar d_t rho = [ -(hbar^2/M) d_r d_s + U(r+s/2) - U(r-s/2) "
               "+ i (beta Gamma hbar^2 / (2 X0 M)) G'(s/X0) d_s + i Gamma (G(s/X0) - 1) ] rho")


# ---------------------------------------------------------------- generator pieces

def friction_velocity(p: PhysicalParams, g: CorrelatorSpec, s: np.ndarray) -> np.ndarray:
    """Coefficient c(s) of the d_s term in d_t rho; odd in s, 0 at s = 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    nz = s != 0.0
    coeff = p.beta * p.spreading_width * p.hbar / (2.0 * p.correlation_length * p.mass)
    out[nz] = coeff * np.asarray(correlator_deriv(g, s[nz] / p.correlation_length))
    return out


def _local_rate(grid: GridSpec, p: PhysicalParams, g: CorrelatorSpec, u: PotentialSpec,
                terms: GeneratorTerms) -> np.ndarray:
    """Pointwise part of d_t rho / rho: -(i/hbar) dU + (Gamma/hbar)(G - 1)."""
    r, s = grid.mesh()
    rate = np.zeros(r.shape, dtype=complex)
    if terms.potential and not u.is_free:
        du = np.asarray(potential_eval(u, r + 0.5 * s)) - np.asarray(potential_eval(u, r - 0.5 * s))
        rate += -1j * du / p.hbar
    if terms.decoherence:
        gm1 = np.asarray(correlator_eval(g, grid.s / p.correlation_length)) - 1.0
        rate += (p.spreading_width / p.hbar) * gm1[np.newaxis, :]
    return rate


def _wavenumbers(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    kr = 2.0 * np.pi * sfft.fftfreq(grid.nr, grid.dr)
    ks = 2.0 * np.pi * sfft.fftfreq(grid.ns, grid.ds)
    return kr, ks


def _without_nyquist(k: np.ndarray) -> np.ndarray:
    k = k.copy()
    if len(k) % 2 == 0:
        k[len(k) // 2] = 0.0
    return k


def apply_generator(rho: DensityMatrixGrid, p: PhysicalParams, g: CorrelatorSpec, u: PotentialSpec,
                    terms: GeneratorTerms = GeneratorTerms(), workers: int | None = None) -> np.ndarray:
    """d_t rho from the (r, s) generator, derivatives taken spectrally."""
    grid = rho.spec
    vals = rho.values
    out = _local_rate(grid, p, g, u, terms) * vals
    kr, ks = _wavenumbers(grid)
    kr, ks = _without_nyquist(kr), _without_nyquist(ks)
    if terms.kinetic:
        spec = sfft.fft2(vals, workers=workers)
        mixed = sfft.ifft2(-np.outer(kr, ks) * spec, workers=workers)
        out += 1j * (p.hbar / p.mass) * mixed
    if terms.friction:
        ds_rho = sfft.ifft(1j * ks[np.newaxis, :] * sfft.fft(vals, axis=1, workers=workers), axis=1, workers=workers)
        out += friction_velocity(p, g, grid.s)[np.newaxis, :] * ds_rho
    return out


# ---------------------------------------------------------------- transformation check

def _d1(f: t.Callable[[float], complex], x: float, h: float) -> complex:
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def _d2(f: t.Callable[[float], complex], x: float, h: float) -> complex:
    return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) / (12 * h * h)


def _random_test_function(rng: np.random.Generator, n_terms: int = 3) -> t.Callable[[float, float], complex]:
    c = rng.normal(size=n_terms) + 1j * rng.normal(size=n_terms)
    a = rng.uniform(0.5, 1.5, n_terms)
    b = rng.uniform(0.5, 1.5, n_terms)
    xc = rng.uniform(-0.5, 0.5, n_terms)
    yc = rng.uniform(-0.5, 0.5, n_terms)
    px = rng.uniform(-1.0, 1.0, n_terms)
    qy = rng.uniform(-1.0, 1.0, n_terms)
    e = rng.uniform(-0.2, 0.2, n_terms)

    def f(x: float, y: float) -> complex:
        return complex(np.sum(c * np.exp(-a * (x - xc) ** 2 - b * (y - yc) ** 2 + e * x * y
                                         + 1j * (px * x - qy * y))))
    return f


def _rs_coefficients(p: PhysicalParams) -> tuple[float, float, float]:
    """Kinetic, friction and decoherence coefficients of the (r, s) generator."""
    return (-(p.hbar**2) / p.mass,
            p.beta * p.spreading_width * p.hbar**2 / (2.0 * p.correlation_length * p.mass),
            p.spreading_width)


def transform_equation(p: PhysicalParams, g: CorrelatorSpec, u: PotentialSpec, n_trials: int = 16,
                       seed: int = 0, rtol: float = 1e-8, h: float = 2e-3) -> GeneratorForm:
    """Check the (X, Y) -> (r, s) rewrite of the generator on random smooth functions.

    Both forms are applied with 4th-order finite differences in their own
    coordinates at the same physical points; a mismatch above `rtol` aborts.
    """
    hbar, m, x0 = p.hbar, p.mass, p.correlation_length
    fric_xy = p.beta * p.spreading_width * hbar / (4.0 * x0 * m)
    kin_rs, fric_rs, deco_rs = _rs_coefficients(p)
    rng = np.random.Generator(np.random.Philox(key=seed))

    def U(q: float) -> float:
        return float(potential_eval(u, q))

    def G(x: float) -> float:
        return float(correlator_eval(g, x))

    def dG(x: float) -> float:
        return float(correlator_deriv(g, x))

    lo, hi = -1.5, 1.5
    if u.kind == "tabulated":
        lo, hi = max(lo, u.table_q[0] + 4 * h), min(hi, u.table_q[-1] - 4 * h)
    max_sep = min(hi - lo, x0 * g.domain - 4 * h)
    min_sep = min(0.05 * x0, 0.1 * max_sep)

    worst = 0.0
    scale = 0.0
    for _ in range(n_trials):
        f = _random_test_function(rng)
        while True:
            X, Y = rng.uniform(lo, hi, 2)
            if min_sep < abs(X - Y) < max_sep:
                break
        fv = f(X, Y)
        fxx = _d2(lambda x: f(x, Y), X, h)
        fyy = _d2(lambda y: f(X, y), Y, h)
        fx = _d1(lambda x: f(x, Y), X, h)
        fy = _d1(lambda y: f(X, y), Y, h)
        sxy = (X - Y) / x0
        h_xy = (-(hbar**2) / (2 * m) * (fxx - fyy)
                + (U(X) - U(Y)) * fv
                - fric_xy * dG(sxy) * (-1j * hbar) * (fx - fy)
                + 1j * p.spreading_width * (G(sxy) - 1.0) * fv)

        def gfun(r: float, s: float) -> complex:
            return f(r + 0.5 * s, r - 0.5 * s)

        r, s = 0.5 * (X + Y), X - Y
        g_rs = _d1(lambda rr: _d1(lambda ss: gfun(rr, ss), s, h), r, h)
        g_s = _d1(lambda ss: gfun(r, ss), s, h)
        h_rs = (kin_rs * g_rs
                + (U(r + 0.5 * s) - U(r - 0.5 * s)) * gfun(r, s)
                + 1j * fric_rs * dG(s / x0) * g_s
                + 1j * deco_rs * (G(s / x0) - 1.0) * gfun(r, s))
        scale = max(scale, abs(h_xy))
        worst = max(worst, abs(h_xy - h_rs))

    worst = worst / scale if scale > 0 else 0.0
    if worst > rtol:
        raise TransformationMismatch(
            f"(X, Y) and (r, s) forms of the generator disagree: max relative mismatch {worst:.3e} > {rtol:.1e}")
    logger.debug("generator rewrite verified on %d random states, max relative mismatch %.2e", n_trials, worst)
    return GeneratorForm(EQUATION_RS, kin_rs, fric_rs, deco_rs, worst, n_trials)


@functools.lru_cache(maxsize=64)
def _verified_form(p: PhysicalParams, g: CorrelatorSpec, u: PotentialSpec) -> GeneratorForm:
    return transform_equation(p, g, u)


# ---------------------------------------------------------------- diagnostics

def positivity_monitor(rho: DensityMatrixGrid, n_coarse: int = 64) -> float:
    """Smallest eigenvalue of rho(X, Y) re-gridded on a coarse square grid, relative to the largest."""
    grid = rho.spec
    half = 0.999 * min(0.5 * grid.r_extent, 0.25 * grid.s_extent)
    x = np.linspace(-half, half, n_coarse)
    dx = x[1] - x[0]
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([0.5 * (X + Y), X - Y], axis=-1)
    kw = dict(method="linear", bounds_error=False, fill_value=0.0)
    re = RegularGridInterpolator((grid.r, grid.s), rho.values.real, **kw)(pts)
    im = RegularGridInterpolator((grid.r, grid.s), rho.values.imag, **kw)(pts)
    mat = (re + 1j * im) * dx
    mat = 0.5 * (mat + mat.conj().T)
    eig = eigvalsh(mat)
    top = np.max(np.abs(eig))
    return float(eig[0] / top) if top > 0 else 0.0


def residual_norm(candidate: t.Sequence[DensityMatrixGrid], p: PhysicalParams, g: CorrelatorSpec,
                  u: PotentialSpec, terms: GeneratorTerms = GeneratorTerms(), workers: int | None = None) -> float:
    """|| i hbar d_t rho - H rho || / || i hbar d_t rho || over the interior slices.

    The time derivative is the second-order centered difference (np.gradient
    handles uneven spacing).
    """
    if len(candidate) < 3:
        raise DomainError(f"residual_norm needs at least three time slices, got {len(candidate)}")
    times = np.array([c.time_stamp for c in candidate])
    if np.any(np.diff(times) <= 0):
        raise DomainError("candidate time stamps must increase strictly")
    stack = np.stack([c.values for c in candidate])
    dt_rho = np.gradient(stack, times, axis=0, edge_order=2)
    num = 0.0
    den = 0.0
    for i in range(1, len(candidate) - 1):
        gen = apply_generator(candidate[i], p, g, u, terms, workers)
        num += float(np.sum(np.abs(dt_rho[i] - gen) ** 2))
        den += float(np.sum(np.abs(dt_rho[i]) ** 2))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    # the common factor i*hbar cancels in the ratio
    return math.sqrt(num / den)


# ---------------------------------------------------------------- split-step propagator

def _characteristic_feet(p: PhysicalParams, g: CorrelatorSpec, s: np.ndarray, dt: float) -> np.ndarray:
    """phi_dt(s): flow of ds/dtau = c(s) for time dt (RK4 sub-steps), never crossing s = 0."""
    phi = s.astype(float).copy()
    h = dt / FRICTION_SUBSTEPS
    for _ in range(FRICTION_SUBSTEPS):
        k1 = friction_velocity(p, g, phi)
        k2 = friction_velocity(p, g, phi + 0.5 * h * k1)
        k3 = friction_velocity(p, g, phi + 0.5 * h * k2)
        k4 = friction_velocity(p, g, phi + h * k3)
        nxt = phi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        crossed = np.sign(nxt) != np.sign(phi)
        phi = np.where(crossed, 0.0, nxt)
    return phi


def _fourier_interpolation_matrix(grid: GridSpec, targets: np.ndarray) -> np.ndarray:
    """Real periodic band-limited interpolation from the s-grid onto `targets`.

    The Nyquist mode enters as a cosine so the kernel stays real and even,
    which keeps rho(r, -s) = rho(r, s)* under the friction step.
    """
    s = grid.s
    n = grid.ns
    ks = 2.0 * np.pi * sfft.fftfreq(n, grid.ds)
    nyq = n // 2
    keep = np.ones(n, dtype=bool)
    keep[nyq] = False
    diff = targets[:, None] - s[None, :]
    kernel = np.real(np.exp(1j * targets[:, None] * ks[None, keep]) @ np.exp(-1j * ks[keep, None] * s[None, :]))
    kernel += np.cos(ks[nyq] * diff)
    return kernel / n


class SplitStepper:
    """Precomputed Strang step A(dt/2) P(dt/2) C(dt) P(dt/2) A(dt/2)."""

    def __init__(self, grid: GridSpec, p: PhysicalParams, g: CorrelatorSpec, u: PotentialSpec, opts: SolverOptions):
        self.grid = grid
        self.workers = opts.workers
        terms = opts.terms
        dt = opts.dt
        kr, ks = _wavenumbers(grid)

        self.kinetic_half = None
        if terms.kinetic:
            # Nyquist rows and columns are their own mirror image: no phase there
            phase = np.outer(_without_nyquist(kr), _without_nyquist(ks))
            self.kinetic_half = np.exp(-1j * (p.hbar / p.mass) * phase * 0.5 * dt)
        if opts.dealias:
            mask = ((np.abs(kr) <= (2.0 / 3.0) * np.abs(kr).max())[:, None]
                    & (np.abs(ks) <= (2.0 / 3.0) * np.abs(ks).max())[None, :])
            base = self.kinetic_half if self.kinetic_half is not None else np.ones((grid.nr, grid.ns), complex)
            self.kinetic_half = base * mask

        self.local_half = np.exp(0.5 * dt * _local_rate(grid, p, g, u, terms))

        self.friction_matrix_t = None
        if terms.friction:
            feet = _characteristic_feet(p, g, grid.s, dt)
            self.friction_matrix_t = np.ascontiguousarray(_fourier_interpolation_matrix(grid, feet).T)

        self.absorber = None
        if opts.absorb_width > 0:
            width = opts.absorb_width * grid.r_extent
            dist = np.minimum(grid.r - grid.r[0], grid.r[-1] - grid.r)
            ramp = np.clip(dist / width, 0.0, 1.0)
            self.absorber = (np.sin(0.5 * np.pi * ramp) ** 0.125)[:, None]

    def _kinetic(self, vals: np.ndarray) -> np.ndarray:
        if self.kinetic_half is None:
            return vals
        return sfft.ifft2(self.kinetic_half * sfft.fft2(vals, workers=self.workers), workers=self.workers)

    def step(self, vals: np.ndarray) -> np.ndarray:
        vals = self._kinetic(vals)
        vals = self.local_half * vals
        if self.friction_matrix_t is not None:
            vals = vals @ self.friction_matrix_t
        vals = self.local_half * vals
        vals = self._kinetic(vals)
        if self.absorber is not None:
            vals = self.absorber * vals
        return vals


class RK4Stepper:
    def __init__(self, grid: GridSpec, p: PhysicalParams, g: CorrelatorSpec, u: PotentialSpec, opts: SolverOptions):
        self.template = DensityMatrixGrid(np.zeros((grid.nr, grid.ns), complex), grid.r_extent, grid.s_extent)
        self.args = (p, g, u, opts.terms, opts.workers)
        self.dt = opts.dt

    def _rhs(self, vals: np.ndarray) -> np.ndarray:
        return apply_generator(self.template.with_values(vals), *self.args)

    def step(self, vals: np.ndarray) -> np.ndarray:
        dt = self.dt
        k1 = self._rhs(vals)
        k2 = self._rhs(vals + 0.5 * dt * k1)
        k3 = self._rhs(vals + 0.5 * dt * k2)
        k4 = self._rhs(vals + dt * k3)
        return vals + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _provenance(p, g, u, opts, grid, extra: dict | None) -> dict:
    def plain(obj):
        return {k: v for k, v in dataclasses.asdict(obj).items() if not k.startswith("_")}
    out = {"physics": plain(p), "correlator": plain(g), "potential": plain(u),
           "solver": plain(opts), "grid": plain(grid)}
    if extra:
        out.update(extra)
    return out


def evolve(rho0: DensityMatrixGrid, p: PhysicalParams, g: CorrelatorSpec, u: PotentialSpec,
           opts: SolverOptions, provenance: dict | None = None) -> Trajectory:
    if not np.all(np.isfinite(rho0.values)):
        raise DomainError("initial density matrix contains non-finite values")
    headroom = rho0.boundary_headroom()
    if headroom > HEADROOM:
        logger.warning("initial state reaches the grid edge (edge/peak = %.2e > %.0e); expect wrap-around", headroom, HEADROOM)
    _verified_form(p, g, u)

    grid = rho0.spec
    stepper = SplitStepper(grid, p, g, u, opts) if opts.scheme == "strang-split" else RK4Stepper(grid, p, g, u, opts)
    trace0 = rho0.trace()

    snapshots = [rho0]
    rows = []
    positivity = []
    if opts.positivity_check:
        positivity.append((rho0.time_stamp, positivity_monitor(rho0)))
    stopped, diagnostic = False, ""
    vals = rho0.values.copy()
    last_valid = rho0

    steps = range(1, opts.n_steps + 1)
    for n in tqdm(steps, desc="Evolving", disable=not opts.progress):
        vals = stepper.step(vals)
        time = rho0.time_stamp + n * opts.dt
        current = rho0.with_values(vals, time)
        if not np.all(np.isfinite(vals)):
            logger.error("non-finite density matrix at step %d (t = %.6g); aborting", n, time)
            raise NumericalAbort(f"NaN/overflow at step {n}, t = {time:.6g}", last_valid=last_valid)
        trace = current.trace()
        herm = current.hermiticity_defect()
        rows.append({"step": n, "time": time, "trace": trace, "trace_drift": trace - trace0,
                     "hermiticity_defect": herm})
        if n % opts.snapshot_stride == 0 or n == opts.n_steps:
            snapshots.append(current)
            last_valid = current
            if opts.positivity_check:
                lam = positivity_monitor(current)
                positivity.append((time, lam))
                if lam < -1e-3:
                    logger.warning("positivity violation at t = %.4g: min eigenvalue / max = %.3e", time, lam)
        if abs(trace - trace0) > opts.trace_tolerance:
            stopped = True
            diagnostic = (f"trace drift {trace - trace0:.3e} exceeds tolerance {opts.trace_tolerance:.1e} "
                          f"at step {n} (t = {time:.6g})")
            logger.warning("early stop: %s", diagnostic)
            if snapshots[-1] is not current:
                snapshots.append(current)
            break
        if herm > opts.hermiticity_tolerance:
            logger.warning("hermiticity defect %.3e above tolerance at step %d", herm, n)

    log = pd.DataFrame(rows, columns=["step", "time", "trace", "trace_drift", "hermiticity_defect"])
    logger.info("evolved %d steps to t = %.6g (max |trace drift| %.2e, max hermiticity defect %.2e)",
                len(rows), snapshots[-1].time_stamp,
                float(log["trace_drift"].abs().max()) if len(log) else 0.0,
                float(log["hermiticity_defect"].max()) if len(log) else 0.0)
    return Trajectory(snapshots, log, _provenance(p, g, u, opts, grid, provenance), stopped, diagnostic, positivity)
