"""Consistency checks that turn the stated physics into measured findings.

Each `adjudicate_*` function runs a small experiment and returns a
ValidationReport: a list of findings with the measured number, the reference
values it is compared against, and a verdict. Quoted formulas are compared
as stated; disagreement is reported, never silently corrected.
"""
from __future__ import annotations
import logging
import math
import typing as t
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.integrate import quad

try:
    from . import analytic_solutions as an
    from .classical_limit import coefficients, einstein_product, kramers_covariance, run_langevin, thermal_ensemble
    from .density_grid import DensityMatrixGrid, GridSpec, coherent_state, coherent_state_at, gaussian_mixed_state
    from .errors import DomainError
    from .evolver import GeneratorTerms, SolverOptions, Trajectory, evolve, residual_norm
    from .observables import (CumulantSeries, cumulant_series, fit_diffusion_exponent, momentum_marginal,
                              stable_tail_index)
    from .physical_model import CorrelatorSpec, PhysicalParams, PotentialSpec, correlator_eval, toward_classical
except ImportError:
    import analytic_solutions as an
    from classical_limit import coefficients, einstein_product, kramers_covariance, run_langevin, thermal_ensemble
    from density_grid import DensityMatrixGrid, GridSpec, coherent_state, coherent_state_at, gaussian_mixed_state
    from errors import DomainError
    from evolver import GeneratorTerms, SolverOptions, Trajectory, evolve, residual_norm
    from observables import (CumulantSeries, cumulant_series, fit_diffusion_exponent, momentum_marginal,
                             stable_tail_index)
    from physical_model import CorrelatorSpec, PhysicalParams, PotentialSpec, correlator_eval, toward_classical

logger = logging.getLogger(__name__)

VERDICTS = ("pass", "fail", "agrees", "discrepant", "info")
MEASUREMENT_PRECISION = 0.02
CONVERGENCE_DRIFT = 0.01
CHI_TOLERANCE = 1e-2
RELAXATION_SPAN = 40.0       # default run length, in units of 1/gamma
STEADY_SPAN = 10.0           # stationarity window, in units of 1/gamma
CLASSICAL_FACTORS = (1.0, 0.5, 0.25)  # hbar scalings for the classical-limit sweep


@dataclass
class Finding:
    check: str
    quantity: str
    measured: float
    references: dict[str, float] = field(default_factory=dict)
    verdict: str = "info"
    note: str = ""

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    def add(self, *args, **kwargs) -> Finding:
        finding = Finding(*args, **kwargs)
        self.findings.append(finding)
        level = logging.WARNING if finding.verdict in ("fail", "discrepant") else logging.INFO
        logger.log(level, "[%s] %s = %.6g -> %s %s", finding.check, finding.quantity, finding.measured,
                   finding.verdict, finding.note)
        return finding

    def extend(self, other: "ValidationReport") -> "ValidationReport":
        self.findings.extend(other.findings)
        return self

    @property
    def passed(self) -> bool:
        return not any(f.verdict == "fail" for f in self.findings)

    def get(self, quantity: str) -> Finding:
        for f in self.findings:
            if f.quantity == quantity:
                return f
        raise KeyError(quantity)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for f in self.findings:
            row = {"check": f.check, "quantity": f.quantity, "measured": f.measured, "verdict": f.verdict,
                   "note": f.note}
            row.update({f"ref:{k}": v for k, v in f.references.items()})
            rows.append(row)
        return pd.DataFrame(rows)

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "findings": [{"check": f.check, "quantity": f.quantity, "measured": f.measured,
                              "references": f.references, "verdict": f.verdict, "note": f.note}
                             for f in self.findings]}


def _agreement(measured: float, reference: float, rel: float = MEASUREMENT_PRECISION) -> str:
    return "agrees" if abs(measured - reference) <= rel * abs(reference) else "discrepant"


def _relative_linf(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


# ---------------------------------------------------------------- classical identities

def check_einstein_identity(n_draws: int = 1000, seed: int = 0) -> ValidationReport:
    rng = np.random.Generator(np.random.Philox(key=seed))
    worst = 0.0
    for _ in range(n_draws):
        m, hbar, temp, width, x0 = np.exp(rng.uniform(-3.0, 3.0, 5))
        worst = max(worst, abs(einstein_product(PhysicalParams(m, hbar, temp, width, x0)) - 1.0))
    report = ValidationReport()
    report.add("einstein", "max |M beta gamma D_QQ - 1|", worst, {"tolerance": 1e-12},
               "pass" if worst < 1e-12 else "fail", f"{n_draws} log-uniform parameter draws")
    return report


# ---------------------------------------------------------------- evolver oracles

def adjudicate_unitary_limit(grid: GridSpec | None = None, stiffness: float = 1.0, q0: float = 2.0,
                             steps_per_period: int = 2000, tolerance: float = 1e-4,
                             workers: int | None = None) -> ValidationReport:
    """Bath switched off, harmonic well, coherent state: one full period against the exact orbit."""
    grid = grid or GridSpec(256, 256, 20.0, 20.0)
    p = PhysicalParams(1.0, 1.0, 1.0, 1.0, 1.0)
    u = PotentialSpec("harmonic", stiffness=stiffness)
    period = 2.0 * math.pi * math.sqrt(p.mass / stiffness)
    rho0 = coherent_state(grid, p, stiffness, q0)
    opts = SolverOptions(dt=period / steps_per_period, n_steps=steps_per_period, snapshot_stride=steps_per_period,
                         terms=GeneratorTerms(friction=False, decoherence=False), workers=workers)
    traj = evolve(rho0, p, CorrelatorSpec(), u, opts)
    exact = coherent_state_at(grid, p, stiffness, q0, 0.0, traj.final.time_stamp)
    linf = float(np.max(np.abs(traj.final.values - exact.values)))
    report = ValidationReport()
    report.add("unitary", "L_inf deviation after one period", linf, {"tolerance": tolerance},
               "pass" if linf < tolerance else "fail")
    _conservation_findings(report, "unitary", traj)
    return report


def adjudicate_decoherence_oracle(p: PhysicalParams, g: CorrelatorSpec, grid: GridSpec | None = None,
                                  t: float = 1.0, n_steps: int = 100, tolerance: float = 1e-6) -> ValidationReport:
    """Kinetic and friction terms off: the evolver against rho0 exp[(Gamma t/hbar)(G - 1)]."""
    grid = grid or GridSpec(64, 128, 16.0, 16.0)
    rho0 = gaussian_mixed_state(grid, p.hbar, 0.0, 1.0, p.hbar / 2.0)
    opts = SolverOptions(dt=t / n_steps, n_steps=n_steps, snapshot_stride=n_steps, terms=GeneratorTerms.infinite_mass())
    traj = evolve(rho0, p, g, PotentialSpec(), opts)
    exact = an.decoherence_limit(rho0, p, g, traj.final.time_stamp)
    rel = _relative_linf(traj.final.values, exact.values)
    report = ValidationReport()
    report.add("decoherence", "relative L_inf vs closed form", rel, {"tolerance": tolerance},
               "pass" if rel < tolerance else "fail")
    return report


def _conservation_findings(report: ValidationReport, check: str, traj: Trajectory, tolerance: float = 1e-6) -> None:
    drift = float(traj.conservation["trace_drift"].abs().max())
    herm = float(traj.conservation["hermiticity_defect"].max())
    report.add(check, "max |trace drift|", drift, {"tolerance": tolerance}, "pass" if drift < tolerance else "fail")
    report.add(check, "max hermiticity defect", herm, {"tolerance": tolerance}, "pass" if herm < tolerance else "fail")


# ---------------------------------------------------------------- equilibrium momentum statistics

def adjudicate_equilibrium(p: PhysicalParams, g: CorrelatorSpec | None = None, grid: GridSpec | None = None,
                           dt: float = 0.04, t_end: float | None = None, sigma_q: float = 12.0,
                           sigma_p0: float | None = None, n_snapshots: int = 40,
                           workers: int | None = None, progress: bool = False) -> tuple[ValidationReport, CumulantSeries]:
    """Long free evolution from a sub-thermal state; the stationary momentum cumulants against the stationary solution.

    The run lasts t_end = 40/gamma by default and stationarity is judged over
    the last STEADY_SPAN/gamma. Momentum statistics of free motion do not
    depend on r, so the r-grid only has to resolve and hold the initial state.
    """
    g = g or CorrelatorSpec("gaussian")
    grid = grid or GridSpec(32, 1024, 160.0, 102.4)
    gamma = coefficients(p).gamma
    t_end = RELAXATION_SPAN / gamma if t_end is None else t_end
    sp0 = 0.5 * math.sqrt(p.mass * p.temperature) if sigma_p0 is None else sigma_p0
    rho0 = gaussian_mixed_state(grid, p.hbar, 0.0, sigma_q, sp0)
    n_steps = int(round(t_end / dt))
    opts = SolverOptions(dt=dt, n_steps=n_steps, snapshot_stride=max(1, n_steps // n_snapshots),
                         workers=workers, progress=progress)
    traj = evolve(rho0, p, g, PotentialSpec(), opts)
    series = cumulant_series(traj.snapshots, p, q_orders=(), p_orders=(2, 4))
    report = ValidationReport()
    _conservation_findings(report, "equilibrium", traj)

    times = series.times
    k2, k4 = series.column("P", 2), series.column("P", 4)
    steady = times >= times[-1] - min(STEADY_SPAN / gamma, 0.5 * times[-1])
    drift = float((k2[steady].max() - k2[steady].min()) / abs(k2[-1]))
    converged = drift < CONVERGENCE_DRIFT
    report.add("equilibrium", "<<P^2>> relative drift over steady state", drift, {"tolerance": CONVERGENCE_DRIFT},
               "pass" if converged else "fail", f"t >= {times[steady][0]:.4g}")

    mt = p.mass * p.temperature
    p2_refs = {"2MT": an.equilibrium_p2(p), "MT": an.maxwellian_comparator(p)}
    p2_note = (f"against 2MT: {_agreement(k2[-1], an.equilibrium_p2(p))}; "
               f"against MT: {_agreement(k2[-1], an.maxwellian_comparator(p))}")
    if g.family == "gaussian":
        stationary2 = an.stationary_momentum_cumulant(1, p)
        p2_refs["stationary"] = stationary2
        p2_ok = abs(k2[-1] - stationary2) <= MEASUREMENT_PRECISION * abs(stationary2)
    else:
        p2_ok = 0.5 * mt <= k2[-1] <= 2.5 * mt
    report.add("equilibrium", "<<P^2>>", float(k2[-1]), p2_refs, "pass" if converged and p2_ok else "fail", p2_note)

    if g.family == "gaussian":
        quoted = an.momentum_cumulant_formula(2, p)
        stationary4 = an.stationary_momentum_cumulant(2, p)
        report.add("equilibrium", "<<P^4>> vs quoted formula (n = 2)", float(k4[-1]), {"quoted": quoted},
                   _agreement(k4[-1], quoted))
        report.add("equilibrium", "<<P^4>> vs stationary solution", float(k4[-1]), {"stationary": stationary4},
                   "pass" if abs(k4[-1] - stationary4) <= MEASUREMENT_PRECISION * abs(stationary4) else "fail")
        report.add("equilibrium", "sign of <<P^4>>", float(k4[-1]), {"upper bound": 0.0},
                   "pass" if k4[-1] < 0 else "fail",
                   "narrower than Maxwellian" if k4[-1] < 0 else "broader than Maxwellian (positive excess)")

    s = grid.s
    half_width = 5.0 * p.hbar / math.sqrt(mt)
    window = np.abs(s) <= half_width
    chi = np.real(traj.final.values.sum(axis=0) * grid.dr)[window]
    chi_eq = an.equilibrium_characteristic_function(s[window], p, g)
    gap = float(np.max(np.abs(chi - chi_eq)))
    report.add("equilibrium", "max |chi - chi_eq|", gap, {"tolerance": CHI_TOLERANCE},
               "pass" if gap <= CHI_TOLERANCE else "fail", f"|s| <= {half_width:.3g}")
    return report, series


# ---------------------------------------------------------------- free propagator

def adjudicate_free_propagator(p: PhysicalParams, g: CorrelatorSpec | None = None, grid: GridSpec | None = None,
                               t: float = 1.0, dt: float = 0.01, sigma_q: float = 2.0, sigma_p: float | None = None,
                               workers: int | None = None) -> ValidationReport:
    """Dual-method check of the free-motion formula.

    The formula is compared with the evolver with and without the friction
    term, its residual is measured in both equations, and the evolver's
    self-convergence order is estimated from dt, dt/2 and dt/4.
    """
    g = g or CorrelatorSpec("gaussian")
    grid = grid or GridSpec(128, 128, 40.0, 20.0)
    sp = math.sqrt(p.mass * p.temperature) if sigma_p is None else sigma_p
    rho0 = gaussian_mixed_state(grid, p.hbar, 0.0, sigma_q, max(sp, p.hbar / (2.0 * sigma_q)))
    u = PotentialSpec()
    formula = an.free_propagate(rho0, p, g, t, workers=workers)
    no_friction = GeneratorTerms(friction=False)
    report = ValidationReport()

    def final(step: float, terms: GeneratorTerms) -> DensityMatrixGrid:
        n = int(round(t / step))
        return evolve(rho0, p, g, u, SolverOptions(dt=step, n_steps=n, snapshot_stride=n, terms=terms,
                                                   workers=workers)).final

    coarse = final(dt, GeneratorTerms())
    report.add("free-propagator", "relative L_inf: formula vs evolver without friction",
               _relative_linf(final(dt, no_friction).values, formula.values), {}, "info")
    report.add("free-propagator", "relative L_inf: formula vs full evolver",
               _relative_linf(coarse.values, formula.values), {}, "info")

    h = 1e-3 * t
    slices = [an.free_propagate(rho0, p, g, tt, workers=workers) for tt in (t - h, t, t + h)]
    report.add("free-propagator", "residual of formula, full equation",
               residual_norm(slices, p, g, u, GeneratorTerms(), workers), {}, "info")
    report.add("free-propagator", "residual of formula, equation without friction",
               residual_norm(slices, p, g, u, no_friction, workers), {}, "info")

    half = final(dt / 2.0, GeneratorTerms())
    quarter = final(dt / 4.0, GeneratorTerms())
    e1 = float(np.max(np.abs(coarse.values - half.values)))
    e2 = float(np.max(np.abs(half.values - quarter.values)))
    order = math.log2(e1 / e2) if e2 > 0 else math.inf
    report.add("free-propagator", "evolver self-convergence order", order, {"required": 2.0},
               "pass" if order >= 1.9 else "fail", f"dt = {dt:g}, {dt / 2:g}, {dt / 4:g}")
    return report


# ---------------------------------------------------------------- normal diffusion

def adjudicate_normal_diffusion(p: PhysicalParams | None = None, grid: GridSpec | None = None, dt: float = 0.02,
                                t_end: float = 40.0, window: tuple[float, float] = (10.0, 40.0),
                                sigma_q: float = math.sqrt(0.5), n_walkers: int = 100_000,
                                langevin_dt: float = 0.005, seed: int = 0, workers: int | None = None,
                                progress: bool = False, classical_factors: t.Sequence[float] = CLASSICAL_FACTORS,
                                ) -> tuple[ValidationReport, CumulantSeries, pd.DataFrame]:
    """Quadratic correlator, high temperature: <<Q^2>> exponent and slope, quantum against Langevin.

    With `classical_factors` the same parameters are then swept toward the
    classical limit (adjudicate_classical_limit); pass () to skip the sweep.
    """
    p = p or PhysicalParams(mass=1.0, hbar=1.0, temperature=1.0, spreading_width=64.0, correlation_length=4.0)
    grid = grid or GridSpec(256, 128, 96.0, 24.0)
    g = CorrelatorSpec("quadratic-truncated")
    c = coefficients(p)
    sp = math.sqrt(p.mass * p.temperature)
    rho0 = gaussian_mixed_state(grid, p.hbar, 0.0, sigma_q, sp)
    n_steps = int(round(t_end / dt))
    stride = max(1, int(round(0.5 / dt)))
    traj = evolve(rho0, p, g, PotentialSpec(), SolverOptions(dt=dt, n_steps=n_steps, snapshot_stride=stride,
                                                             workers=workers, progress=progress))
    series = cumulant_series(traj.snapshots, p, q_orders=(1, 2), p_orders=(2,))
    fit = fit_diffusion_exponent(series, window)
    report = ValidationReport()
    _conservation_findings(report, "normal-diffusion", traj)
    report.add("normal-diffusion", "exponent nu of <<Q^2>>", fit.exponent, {"expected": 1.0},
               "pass" if abs(fit.exponent - 1.0) <= 0.1 else "fail", f"+- {fit.exponent_stderr:.2g}")
    report.add("normal-diffusion", "d<<Q^2>>/dt", fit.slope, {"2 D_QQ": 2.0 * c.d_qq},
               "pass" if abs(fit.slope - 2.0 * c.d_qq) <= 0.15 * 2.0 * c.d_qq else "fail")

    ens = thermal_ensemble(n_walkers, p, 0.0, sigma_q, seed, sigma_p=sp)
    n_lang = int(round(t_end / langevin_dt))
    _, moments = run_langevin(ens, c, PotentialSpec(), p, langevin_dt, n_lang,
                              record_every=int(round(0.5 / langevin_dt)), progress=progress)
    quantum = series.to_frame()
    sel = (quantum["t"] >= window[0]) & (quantum["t"] <= window[1])
    q_t = quantum.loc[sel, "t"].to_numpy()
    lang_var = np.interp(q_t, moments["time"], moments["q_var"])
    lang_mean = np.interp(q_t, moments["time"], moments["q_mean"])
    rel_var = float(np.max(np.abs(lang_var / quantum.loc[sel, "Q2"].to_numpy() - 1.0)))
    mean_dev = float(np.max(np.abs(lang_mean - quantum.loc[sel, "Q1"].to_numpy())
                            / np.sqrt(quantum.loc[sel, "Q2"].to_numpy())))
    report.add("normal-diffusion", "max relative <<Q^2>> gap, Langevin vs quantum", rel_var, {"tolerance": 0.05},
               "pass" if rel_var <= 0.05 else "fail", f"{n_walkers} walkers")
    report.add("normal-diffusion", "max |<Q> gap| / sigma_Q, Langevin vs quantum", mean_dev, {"tolerance": 0.05},
               "pass" if mean_dev <= 0.05 else "fail")
    kramers = kramers_covariance(q_t, p, sigma_q**2, sp**2)
    report.add("normal-diffusion", "max relative <<Q^2>> gap, Kramers moments vs quantum",
               float(np.max(np.abs(kramers["q_var"].to_numpy() / quantum.loc[sel, "Q2"].to_numpy() - 1.0))), {}, "info")
    if classical_factors:
        report.extend(adjudicate_classical_limit(p, factors=classical_factors, workers=workers)[0])
    return report, series, moments


def adjudicate_classical_limit(p: PhysicalParams, g: CorrelatorSpec | None = None, grid: GridSpec | None = None,
                               factors: t.Sequence[float] = CLASSICAL_FACTORS, dt: float = 0.02,
                               t_end: float | None = None, sigma_q: float = math.sqrt(0.5),
                               workers: int | None = None) -> tuple[ValidationReport, pd.DataFrame]:
    """Shrink hbar at fixed friction and diffusion; the momentum law must approach the Kramers one.

    Each factor runs the free quantum evolution with toward_classical(p, factor)
    from a thermal Gaussian. Kramers keeps that state Gaussian with <<P^2>> on
    its moment equations, so the gap is |<<P^4>>| / <<P^2>>^2 at t_end, next to
    the relative <<P^2>> gap. The s-grid shrinks with hbar so every factor sees
    the same momentum grid.
    """
    g = g or CorrelatorSpec("gaussian")
    grid = grid or GridSpec(128, 128, 32.0, 24.0)
    if len(factors) < 2 or any(f <= 0 for f in factors):
        raise DomainError(f"need at least two positive scaling factors, got {tuple(factors)}")
    factors = sorted(factors, reverse=True)
    t_end = t_end if t_end is not None else 5.0 / coefficients(p).gamma
    n_steps = max(1, int(round(t_end / dt)))
    sp = math.sqrt(p.mass * p.temperature)
    report = ValidationReport()
    rows = []
    for factor in factors:
        pf = toward_classical(p, factor)
        grid_f = GridSpec(grid.nr, grid.ns, grid.r_extent, grid.s_extent * factor)
        rho0 = gaussian_mixed_state(grid_f, pf.hbar, 0.0, sigma_q, sp)
        traj = evolve(rho0, pf, g, PotentialSpec(), SolverOptions(dt=dt, n_steps=n_steps, snapshot_stride=n_steps,
                                                                  workers=workers))
        final = traj.snapshots[-1]
        kappa = cumulant_series([final], pf, q_orders=(), p_orders=(2, 4))
        p2 = float(kappa.column("P", 2)[-1])
        p4 = float(kappa.column("P", 4)[-1])
        kramers_p2 = float(kramers_covariance(np.array([0.0, final.time_stamp]), pf, sigma_q**2, sp**2)["p_var"].iloc[-1])
        row = {"factor": factor, "hbar": pf.hbar, "time": final.time_stamp, "P2": p2, "P4": p4,
               "kramers_P2": kramers_p2, "excess_kurtosis": abs(p4) / p2**2, "p2_gap": abs(p2 / kramers_p2 - 1.0)}
        rows.append(row)
        stationary = abs(an.stationary_momentum_cumulant(2, pf)) / (pf.mass * pf.temperature) ** 2
        report.add("classical-limit", f"|<<P^4>>| / <<P^2>>^2 at hbar x {factor:g}", row["excess_kurtosis"],
                   {"kramers": 0.0, "stationary": stationary}, "info")
        report.add("classical-limit", f"relative <<P^2>> gap vs Kramers at hbar x {factor:g}", row["p2_gap"],
                   {"tolerance": MEASUREMENT_PRECISION}, "pass" if row["p2_gap"] <= MEASUREMENT_PRECISION else "fail")
    table = pd.DataFrame(rows)
    gaps = table["excess_kurtosis"].to_numpy()
    report.add("classical-limit", "excess kurtosis shrinks with hbar", float(gaps[-1] / gaps[0]),
               {"n_factors": float(len(factors))}, "pass" if np.all(np.diff(gaps) < 0) else "fail",
               ", ".join(f"x{f:g}: {k:.3g}" for f, k in zip(table["factor"], gaps)))
    return report, table


# ---------------------------------------------------------------- Levy regime

def levy_oracle_density(momenta: np.ndarray, p: PhysicalParams, g: CorrelatorSpec, t: float, sigma_p: float,
                        s_max: float) -> np.ndarray:
    """(1/pi hbar) int_0^s_max cos(p s/hbar) chi(s) ds for the decohered Gaussian state, by quadrature."""
    rate = p.spreading_width * t / p.hbar

    def chi(s: float) -> float:
        return math.exp(-0.5 * (sigma_p * s / p.hbar) ** 2
                        + rate * (float(correlator_eval(g, s / p.correlation_length)) - 1.0))

    out = np.empty(len(momenta))
    for i, mom in enumerate(momenta):
        val, _ = quad(chi, 0.0, s_max, weight="cos", wvar=abs(mom) / p.hbar, limit=400)
        out[i] = val / (math.pi * p.hbar)
    return out


def adjudicate_levy(alpha: float, p: PhysicalParams | None = None, grid: GridSpec | None = None, t: float = 30.0,
                    sigma_q: float = 50.0, window_width: float = 40.0, l1_tolerance: float = 1e-3,
                    workers: int | None = None) -> ValidationReport:
    """Decohered momentum law for a |x|^alpha correlator (exponential completion).

    Gamma t / hbar is large so the undecohered remainder exp(-Gamma t/hbar) is
    negligible; the stable index is fitted where |s/X0|^alpha lies in
    [0.002, 0.05], where the completion is within a few percent of a pure power.
    """
    p = p or PhysicalParams(mass=1.0, hbar=1.0, temperature=1.0, spreading_width=1.0, correlation_length=30.0)
    grid = grid or GridSpec(64, 16384, 800.0, 60.0)
    g = CorrelatorSpec("levy", alpha=alpha, completion="exponential")
    sigma_p = p.hbar / (2.0 * sigma_q)
    rho = an.decoherence_limit(gaussian_mixed_state(grid, p.hbar, 0.0, sigma_q, sigma_p), p, g, t)
    marginal = momentum_marginal(rho, p, workers=workers)

    rate = p.spreading_width * t / p.hbar
    scale = p.hbar * rate ** (1.0 / alpha) / p.correlation_length
    sel = np.abs(marginal.momenta) <= window_width * scale
    oracle = levy_oracle_density(marginal.momenta[sel], p, g, t, sigma_p, 0.5 * grid.s_extent)
    l1 = float(np.sum(np.abs(marginal.density[sel] - oracle)) * marginal.dp)

    x0 = p.correlation_length
    fit = stable_tail_index(marginal, p, window=(x0 * 0.002 ** (1.0 / alpha), x0 * 0.05 ** (1.0 / alpha)))
    report = ValidationReport()
    report.add("levy", f"L1 distance to quadrature oracle (alpha = {alpha:g})", l1, {"tolerance": l1_tolerance},
               "pass" if l1 < l1_tolerance else "fail", f"|p| <= {window_width * scale:.4g}")
    report.add("levy", f"stable index (alpha = {alpha:g})", fit.alpha, {"alpha": alpha},
               "pass" if abs(fit.alpha - alpha) <= 0.1 else "fail", f"+- {fit.alpha_stderr:.2g}")
    return report
