"""hbar -> 0 limit: Kramers coefficients and a Langevin ensemble for cross-checks."""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp
from scipy.stats import linregress
from tqdm import tqdm

try:
    from .errors import DomainError
    from .physical_model import PhysicalParams, PotentialSpec, potential_deriv
except ImportError:
    from errors import DomainError
    from physical_model import PhysicalParams, PotentialSpec, potential_deriv

logger = logging.getLogger(__name__)

INTEGRATORS = ("euler-maruyama", "baoab")
STABILITY_LIMIT = 0.1
NOISE_BLOCK = 4096
# third counter word separates the random streams by purpose
STREAM_INITIAL, STREAM_STEP = 1, 2


@dataclass(frozen=True)
class ClassicalCoefficients:
    gamma: float
    d_qq: float
    d_pp: float

    def __post_init__(self):
        if self.gamma < 0 or self.d_pp < 0:
            raise DomainError("friction and momentum diffusion must be non-negative")


def coefficients(p: PhysicalParams) -> ClassicalCoefficients:
    """gamma = beta Gamma hbar / 2 M X0^2, D_QQ = 2 X0^2 / beta^2 Gamma hbar, d_pp = M gamma T."""
    gamma = p.beta * p.spreading_width * p.hbar / (2.0 * p.mass * p.correlation_length**2)
    d_qq = 2.0 * p.correlation_length**2 / (p.beta**2 * p.spreading_width * p.hbar)
    d_pp = p.mass * gamma * p.temperature
    return ClassicalCoefficients(gamma, d_qq, d_pp)


def einstein_product(p: PhysicalParams) -> float:
    c = coefficients(p)
    return p.mass * p.beta * c.gamma * c.d_qq


@dataclass(frozen=True)
class LangevinEnsemble:
    positions: np.ndarray
    momenta: np.ndarray
    seed: int
    time: float = 0.0
    step_index: int = 0

    def __post_init__(self):
        if np.shape(self.positions) != np.shape(self.momenta) or np.ndim(self.positions) != 1:
            raise DomainError("positions and momenta must be 1-D arrays of equal length")

    @property
    def n_walkers(self) -> int:
        return len(self.positions)


def _normals(seed: int, stream: int, step: int, n: int) -> np.ndarray:
    """Standard normals for `n` walkers, one Philox stream per block of walkers.

    Block b of step k starts at counter (0, k, b, stream); draws advance only the
    lowest word, so streams never overlap and any split of the walkers over
    workers reproduces the same numbers.
    """
    out = np.empty(n)
    for block, start in enumerate(range(0, n, NOISE_BLOCK)):
        stop = min(start + NOISE_BLOCK, n)
        bitgen = np.random.Philox(key=seed, counter=[0, step, block, stream])
        out[start:stop] = np.random.Generator(bitgen).standard_normal(stop - start)
    return out


def thermal_ensemble(n_walkers: int, p: PhysicalParams, q0: float, sigma_q: float, seed: int,
                     sigma_p: float | None = None, p0: float = 0.0) -> LangevinEnsemble:
    """Walkers matching a Gaussian state; sigma_p defaults to the Maxwellian sqrt(M T)."""
    if n_walkers < 1:
        raise DomainError("n_walkers must be >= 1")
    sp = math.sqrt(p.mass * p.temperature) if sigma_p is None else sigma_p
    q = q0 + sigma_q * _normals(seed, STREAM_INITIAL, 0, n_walkers)
    mom = p0 + sp * _normals(seed, STREAM_INITIAL, 1, n_walkers)
    return LangevinEnsemble(q, mom, seed)


def langevin_step(ens: LangevinEnsemble, c: ClassicalCoefficients, u: PotentialSpec, p: PhysicalParams,
                  dt: float, integrator: str = "euler-maruyama") -> LangevinEnsemble:
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if dt * c.gamma >= STABILITY_LIMIT:
        raise DomainError(f"dt * gamma = {dt * c.gamma:.3g} breaks the stability guard (< {STABILITY_LIMIT}); "
                          f"use dt below {STABILITY_LIMIT / c.gamma:.4g}")
    if integrator not in INTEGRATORS:
        raise DomainError(f"unknown integrator {integrator!r}; expected one of {INTEGRATORS}")
    q, mom, m = ens.positions, ens.momenta, p.mass
    xi = _normals(ens.seed, STREAM_STEP, ens.step_index, ens.n_walkers)

    if integrator == "euler-maruyama":
        force = -np.asarray(potential_deriv(u, q))
        q_new = q + mom / m * dt
        p_new = mom + (force - c.gamma * mom) * dt + math.sqrt(2.0 * c.d_pp * dt) * xi
    else:
        mom = mom - 0.5 * dt * np.asarray(potential_deriv(u, q))
        q = q + 0.5 * dt * mom / m
        decay = math.exp(-c.gamma * dt)
        stationary = c.d_pp / c.gamma if c.gamma > 0 else 0.0
        mom = decay * mom + math.sqrt(stationary * (1.0 - decay**2)) * xi
        q_new = q + 0.5 * dt * mom / m
        p_new = mom - 0.5 * dt * np.asarray(potential_deriv(u, q_new))
    return replace(ens, positions=q_new, momenta=p_new, time=ens.time + dt, step_index=ens.step_index + 1)


def _moments_row(ens: LangevinEnsemble) -> dict:
    return {"time": ens.time,
            "q_mean": float(ens.positions.mean()), "q_var": float(ens.positions.var()),
            "p_mean": float(ens.momenta.mean()), "p_var": float(ens.momenta.var())}


def run_langevin(ens: LangevinEnsemble, c: ClassicalCoefficients, u: PotentialSpec, p: PhysicalParams,
                 dt: float, n_steps: int, record_every: int = 1, integrator: str = "euler-maruyama",
                 progress: bool = False) -> tuple[LangevinEnsemble, pd.DataFrame]:
    """Advance `n_steps` and return the final ensemble plus the moment time series."""
    if n_steps < 1 or record_every < 1:
        raise DomainError("n_steps and record_every must be >= 1")
    rows = [_moments_row(ens)]
    for n in tqdm(range(1, n_steps + 1), desc="Langevin", disable=not progress):
        ens = langevin_step(ens, c, u, p, dt, integrator)
        if n % record_every == 0 or n == n_steps:
            rows.append(_moments_row(ens))
    logger.info("Langevin: %d walkers, %d steps, final <<Q^2>> = %.4g, <<P^2>> = %.4g",
                ens.n_walkers, n_steps, rows[-1]["q_var"], rows[-1]["p_var"])
    return ens, pd.DataFrame(rows)


def momentum_autocorrelation_time(ens: LangevinEnsemble, c: ClassicalCoefficients, u: PotentialSpec,
                                  p: PhysicalParams, dt: float, n_steps: int, floor: float = 0.05,
                                  integrator: str = "euler-maruyama") -> tuple[float, pd.DataFrame]:
    """Decay time of <P(0) P(t)> / <P(0)^2>, from a log-linear fit above `floor`."""
    p_start = ens.momenta - ens.momenta.mean()
    norm = float(np.mean(p_start**2))
    rows = [{"time": 0.0, "acf": 1.0}]
    for n in range(1, n_steps + 1):
        ens = langevin_step(ens, c, u, p, dt, integrator)
        rows.append({"time": n * dt, "acf": float(np.mean(p_start * (ens.momenta - ens.momenta.mean())) / norm)})
    acf = pd.DataFrame(rows)
    window = acf[acf["acf"] > floor]
    if len(window) < 3:
        raise DomainError("autocorrelation decays below the floor within two steps; reduce dt")
    fit = linregress(window["time"], np.log(window["acf"]))
    return -1.0 / fit.slope, acf


def kramers_covariance(times: np.ndarray, p: PhysicalParams, q_var0: float, p_var0: float,
                       qp_cov0: float = 0.0, c: ClassicalCoefficients | None = None) -> pd.DataFrame:
    """Second moments of the free Kramers process, from its closed moment equations."""
    c = coefficients(p) if c is None else c
    m = p.mass

    def rhs(_t, y):
        qq, qp, pp = y
        return [2.0 * qp / m, pp / m - c.gamma * qp, -2.0 * c.gamma * pp + 2.0 * c.d_pp]

    times = np.asarray(times, dtype=float)
    sol = solve_ivp(rhs, (0.0, float(times.max())), [q_var0, qp_cov0, p_var0], t_eval=times,
                    method="DOP853", rtol=1e-10, atol=1e-12)
    return pd.DataFrame({"time": sol.t, "q_var": sol.y[0], "qp_cov": sol.y[1], "p_var": sol.y[2]})
