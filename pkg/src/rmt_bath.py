"""Parametric banded random-matrix bath: sampling and covariance-law verification.

Every class obeys, over canonical index pairs (k <= l, m <= n),

    E[dH_kl(X) dH_mn(Y)*] = delta_km delta_ln (1 + delta_kl) sigma2_kl G((X - Y)/X0),
    sigma2_kl = Gamma / (2 pi sqrt(rho_k rho_l)) exp(-(e_k - e_l)^2 / 2 kappa0^2),

with dH the fluctuation about the diagonal reference spectrum. GSE matrices
are built from 2x2 quaternion blocks and audited through the upper-left
component of each block.
"""
from __future__ import annotations
import logging
import math
import typing as t
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.linalg import eigh
from scipy.optimize import curve_fit
from scipy.stats import linregress, norm
from tqdm import tqdm

try:
    from .errors import DomainError, InvalidCorrelatorError, OutOfDomainError
    from .physical_model import CorrelatorSpec, correlator_eval
except ImportError:
    from errors import DomainError, InvalidCorrelatorError, OutOfDomainError
    from physical_model import CorrelatorSpec, correlator_eval

logger = logging.getLogger(__name__)

SYMMETRY_CLASSES = ("GOE", "GUE", "GSE")
CLIP_TOLERANCE = 1e-12
WIDE_BAND_WARNING = 10.0
MIN_VERIFY_SAMPLES = 100
PASS_FRACTION = 0.95
Z_LIMIT = 3.0
# two-sided 3-sigma level, split over the family of compared quantities
FAMILY_ALPHA = 2.0 * norm.sf(Z_LIMIT)

# third Philox counter word: what the stream is used for
STREAM_SAMPLE, STREAM_AUDIT = 1, 2


@dataclass(frozen=True)
class EnsembleSpec:
    dimension: int
    symmetry: str
    rho0: float
    beta: float
    kappa0: float
    spreading_width: float
    correlation_length: float
    correlator: CorrelatorSpec
    x_points: tuple[float, ...]

    def __post_init__(self):
        if self.symmetry not in SYMMETRY_CLASSES:
            raise DomainError(f"symmetry must be one of {SYMMETRY_CLASSES}, got {self.symmetry!r}")
        if self.dimension < 2:
            raise DomainError(f"dimension must be >= 2, got {self.dimension}")
        if self.symmetry == "GSE" and self.dimension % 2:
            raise DomainError(f"GSE needs an even dimension, got {self.dimension}")
        if self.rho0 <= 0 or self.kappa0 <= 0:
            raise DomainError("rho0 and kappa0 must be positive")
        if self.beta < 0:
            raise DomainError(f"level-density beta must be >= 0, got {self.beta}")
        if self.spreading_width <= 0 or self.correlation_length <= 0:
            raise DomainError("spreading_width and correlation_length must be positive")
        if len(self.x_points) == 0 or not np.all(np.isfinite(self.x_points)):
            raise DomainError("x_points must be a non-empty list of finite positions")
        object.__setattr__(self, "x_points", tuple(float(x) for x in self.x_points))
        spread = (max(self.x_points) - min(self.x_points)) / self.correlation_length
        if spread > self.correlator.domain:
            raise OutOfDomainError(f"x_points span {spread:.4g} X0, beyond the tabulated correlator domain")

    @property
    def n_levels(self) -> int:
        return self.dimension // 2 if self.symmetry == "GSE" else self.dimension

    @property
    def n_x(self) -> int:
        return len(self.x_points)

    def band_indicator(self) -> float:
        """kappa0 * rho at the middle of the reference spectrum."""
        eps = reference_spectrum(self)
        return self.kappa0 * float(level_density(self, eps[len(eps) // 2]))


@dataclass(frozen=True)
class BathSample:
    matrices: np.ndarray    # (n_x, N, N)
    energies: np.ndarray    # (n_levels,)
    symmetry: str
    member: int = 0

    def fluctuation(self, x_index: int, k: int, l: int) -> complex:
        """Audited component of dH_kl at the x_index-th parameter point."""
        h = _component(self.matrices, self.symmetry, np.array([k]), np.array([l]))[x_index, 0]
        return h - (self.energies[k] if k == l else 0.0)


def level_density(spec: EnsembleSpec, eps: np.ndarray | float) -> np.ndarray | float:
    return spec.rho0 * np.exp(spec.beta * np.asarray(eps))


def reference_spectrum(spec: EnsembleSpec) -> np.ndarray:
    """e_k with k = (rho0/beta)(exp(beta e_k) - 1), k = 1..n_levels."""
    k = np.arange(1, spec.n_levels + 1, dtype=float)
    if spec.beta == 0.0:
        return k / spec.rho0
    return np.log1p(k * spec.beta / spec.rho0) / spec.beta


def fit_level_density(energies: np.ndarray, bins: int = 25, min_count: int = 50) -> float:
    """Exponential slope beta of the level density from a histogram of the spectrum."""
    counts, edges = np.histogram(energies, bins=bins)
    centers = 0.5 * (edges[1:] + edges[:-1])
    keep = counts >= min_count
    if keep.sum() < 3:
        raise DomainError(f"fewer than three bins with >= {min_count} levels; use more levels or fewer bins")
    return float(linregress(centers[keep], np.log(counts[keep])).slope)


def variance_profile(spec: EnsembleSpec) -> np.ndarray:
    """sigma2_kl over the n_levels x n_levels reference spectrum."""
    eps = reference_spectrum(spec)
    rho = level_density(spec, eps)
    band = np.exp(-((eps[:, None] - eps[None, :]) ** 2) / (2.0 * spec.kappa0**2))
    return spec.spreading_width / (2.0 * np.pi * np.sqrt(np.outer(rho, rho))) * band


def parameter_covariance(spec: EnsembleSpec) -> np.ndarray:
    x = np.asarray(spec.x_points)
    return np.asarray(correlator_eval(spec.correlator, (x[:, None] - x[None, :]) / spec.correlation_length))


def _covariance_factor(cov: np.ndarray) -> np.ndarray:
    """L with L L^T = cov, eigenvalues below CLIP_TOLERANCE * max clipped to 0."""
    w, v = eigh(cov)
    top = max(float(w.max()), 0.0)
    if w.min() < -CLIP_TOLERANCE * top:
        raise InvalidCorrelatorError(
            f"G((X_i - X_j)/X0) is not positive semidefinite (smallest eigenvalue {w.min():.3e}); "
            "the correlator is not a valid covariance function")
    return v * np.sqrt(np.clip(w, 0.0, None))


def _rng(seed: int, member: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, member, stream, 0]))


def _component(matrices: np.ndarray, symmetry: str, k: np.ndarray, l: np.ndarray) -> np.ndarray:
    if symmetry == "GSE":
        return matrices[:, 2 * k, 2 * l]
    return matrices[:, k, l]


def sample(spec: EnsembleSpec, seed: int, member: int = 0) -> BathSample:
    """One ensemble member: a Gaussian process over the X points for every independent entry."""
    n = spec.n_levels
    eps = reference_spectrum(spec)
    factor = _covariance_factor(parameter_covariance(spec))
    k, l = np.triu_indices(n)
    diag = k == l
    sigma = np.sqrt(variance_profile(spec)[k, l]) * np.where(diag, math.sqrt(2.0), 1.0)
    rng = _rng(seed, member, STREAM_SAMPLE)

    def gp(n_fields: int) -> np.ndarray:
        # (n_fields, n_pairs, n_x), each pair correlated across X through `factor`
        return rng.standard_normal((n_fields, len(k), spec.n_x)) @ factor.T

    if spec.symmetry == "GOE":
        a = (sigma[:, None] * gp(1)[0]).T
        h = np.zeros((spec.n_x, n, n))
        h[:, l, k] = a
        h[:, k, l] = a
        h[:, np.arange(n), np.arange(n)] += eps
    elif spec.symmetry == "GUE":
        z = gp(2)
        a = (sigma[:, None] * np.where(diag[:, None], z[0], (z[0] + 1j * z[1]) / math.sqrt(2.0))).T
        h = np.zeros((spec.n_x, n, n), dtype=complex)
        h[:, l, k] = np.conj(a)
        h[:, k, l] = a
        h[:, np.arange(n), np.arange(n)] += eps
    else:
        z = gp(4)
        a = (sigma[:, None] * np.where(diag[:, None], z[0], (z[0] + 1j * z[3]) / math.sqrt(2.0))).T
        b = (sigma[:, None] * np.where(diag[:, None], 0.0, (z[2] + 1j * z[1]) / math.sqrt(2.0))).T
        h = np.zeros((spec.n_x, 2 * n, 2 * n), dtype=complex)
        k2, l2 = 2 * k, 2 * l
        # block (l, k) is the conjugate transpose of the quaternion block (k, l)
        h[:, l2, k2] = np.conj(a)
        h[:, l2 + 1, k2] = np.conj(b)
        h[:, l2, k2 + 1] = -b
        h[:, l2 + 1, k2 + 1] = a
        h[:, k2, l2] = a
        h[:, k2, l2 + 1] = b
        h[:, k2 + 1, l2] = -np.conj(b)
        h[:, k2 + 1, l2 + 1] = np.conj(a)
        levels = np.repeat(eps, 2)
        h[:, np.arange(2 * n), np.arange(2 * n)] += levels
    return BathSample(h, eps, spec.symmetry, member)


def sample_many(spec: EnsembleSpec, seed: int, n_samples: int, progress: bool = False) -> t.Iterator[BathSample]:
    """Independent members 0..n_samples-1, generated lazily, one Philox stream each."""
    indicator = spec.band_indicator()
    if indicator < WIDE_BAND_WARNING:
        logger.warning("kappa0 * rho = %.3g is below %.0f; the kinetic-equation regime needs a wide band",
                       indicator, WIDE_BAND_WARNING)
    for member in tqdm(range(n_samples), desc=f"Sampling {spec.symmetry}", disable=not progress):
        yield sample(spec, seed, member)


def _draw_audit_set(spec: EnsembleSpec, n_law: int, n_zero: int, seed: int) -> pd.DataFrame:
    """Index quadruples (k, l, m, n) and X pairs (i, j) to audit."""
    rng = _rng(seed, 0, STREAM_AUDIT)
    n = spec.n_levels

    def pair() -> tuple[int, int]:
        k, l = sorted(int(v) for v in rng.integers(0, n, 2))
        return k, l

    rows = []
    n_zero_drawn = 0
    for _ in range(n_law):
        k, l = pair()
        i, j = (int(v) for v in rng.integers(0, spec.n_x, 2))
        rows.append(("law", k, l, k, l, i, j))
    while n_zero_drawn < n_zero:
        (k, l), (m, q) = pair(), pair()
        if (k, l) == (m, q):
            continue
        i, j = (int(v) for v in rng.integers(0, spec.n_x, 2))
        rows.append(("zero", k, l, m, q, i, j))
        n_zero_drawn += 1
    return pd.DataFrame(rows, columns=["kind", "k", "l", "m", "n", "i", "j"])


@dataclass
class CovarianceReport:
    symmetry: str
    n_samples: int
    entries: pd.DataFrame
    law_fraction_within: float
    zero_fraction_within: float
    zero_max_abs_z: float
    zero_threshold: float
    passed: bool

    def summary(self) -> dict:
        return {"symmetry": self.symmetry, "n_samples": self.n_samples,
                "n_law_entries": int((self.entries["kind"] == "law").sum()),
                "n_zero_entries": int((self.entries["kind"] == "zero").sum()),
                "law_fraction_within_3se": self.law_fraction_within,
                "zero_fraction_within_3se": self.zero_fraction_within,
                "zero_max_abs_z": self.zero_max_abs_z, "zero_threshold": self.zero_threshold,
                "passed": self.passed}

    def to_text(self) -> str:
        lines = [f"covariance-law verification ({self.symmetry}, {self.n_samples} samples)"]
        lines += [f"  {key}: {value}" for key, value in self.summary().items() if key not in ("symmetry", "n_samples")]
        return "\n".join(lines)


def _family_threshold(n_tests: int) -> float:
    return float(norm.isf(0.5 * FAMILY_ALPHA / max(n_tests, 1)))


def verify_covariance(samples: t.Iterable[BathSample], spec: EnsembleSpec, n_law: int = 200,
                      n_zero: int = 200, audit_seed: int = 0) -> CovarianceReport:
    """Streaming Monte-Carlo audit of the second-cumulant law.

    Only running sums of the audited products are kept, so `samples` may be a
    generator of any length.
    """
    audit = _draw_audit_set(spec, n_law, n_zero, audit_seed)
    k, l, m, q = (audit[c].to_numpy() for c in ("k", "l", "m", "n"))
    i, j = audit["i"].to_numpy(), audit["j"].to_numpy()
    s1 = np.zeros(len(audit))
    s2 = np.zeros(len(audit))
    count = 0
    for smp in samples:
        comp_kl = _component(smp.matrices, smp.symmetry, k, l) - np.where(k == l, smp.energies[k], 0.0)
        comp_mn = _component(smp.matrices, smp.symmetry, m, q) - np.where(m == q, smp.energies[m], 0.0)
        prod = np.real(comp_kl[i, np.arange(len(audit))] * np.conj(comp_mn[j, np.arange(len(audit))]))
        s1 += prod
        s2 += prod**2
        count += 1
    if count < MIN_VERIFY_SAMPLES:
        raise DomainError(f"verify_covariance needs at least {MIN_VERIFY_SAMPLES} samples, got {count}")

    estimate = s1 / count
    var = np.maximum(s2 / count - estimate**2, 0.0) * count / (count - 1)
    stderr = np.sqrt(var / count)
    sigma2 = variance_profile(spec)[k, l] * np.where(k == l, 2.0, 1.0)
    g = parameter_covariance(spec)[i, j]
    expected = np.where(audit["kind"] == "law", sigma2 * g, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(stderr > 0, (estimate - expected) / stderr, 0.0)
    entries = audit.assign(estimate=estimate, expected=expected, stderr=stderr, z=z)

    law = entries["kind"] == "law"
    law_within = float((entries.loc[law, "z"].abs() <= Z_LIMIT).mean())
    zero_z = entries.loc[~law, "z"].abs()
    zero_within = float((zero_z <= Z_LIMIT).mean()) if len(zero_z) else 1.0
    zero_max = float(zero_z.max()) if len(zero_z) else 0.0
    threshold = _family_threshold(len(zero_z))
    passed = law_within >= PASS_FRACTION and zero_within >= PASS_FRACTION and zero_max <= threshold
    logger.info("%s covariance audit over %d samples: %.1f%% of law entries within 3 SE, "
                "max |z| on structural zeros %.2f (threshold %.2f) -> %s",
                spec.symmetry, count, 100 * law_within, zero_max, threshold, "pass" if passed else "FAIL")
    return CovarianceReport(spec.symmetry, count, entries, law_within, zero_within, zero_max, threshold, passed)


@dataclass(frozen=True)
class ClassComparison:
    entries: pd.DataFrame
    threshold: float
    max_abs_z: float
    passed: bool


def compare_reports(a: CovarianceReport, b: CovarianceReport) -> ClassComparison:
    """z-scores of the difference between two audits of the same index set."""
    keys = ["kind", "k", "l", "m", "n", "i", "j"]
    merged = a.entries.merge(b.entries, on=keys, suffixes=("_a", "_b"))
    if merged.empty:
        raise DomainError("the two reports share no audited entries; audit with the same seed and n_levels")
    se = np.sqrt(merged["stderr_a"] ** 2 + merged["stderr_b"] ** 2)
    diff = merged["estimate_a"] - merged["estimate_b"]
    merged["z"] = np.where(se > 0, diff / se.where(se > 0, 1.0), 0.0)
    threshold = _family_threshold(len(merged))
    max_z = float(merged["z"].abs().max())
    logger.info("%s vs %s: max |z| = %.2f over %d entries (threshold %.2f)",
                a.symmetry, b.symmetry, max_z, len(merged), threshold)
    return ClassComparison(merged[keys + ["estimate_a", "estimate_b", "z"]], threshold, max_z, max_z <= threshold)


@dataclass(frozen=True)
class BandFit:
    kappa0: float
    kappa0_stderr: float
    amplitude: float
    n_samples: int


def fit_band_width(samples: t.Iterable[BathSample], spec: EnsembleSpec, x_index: int = 0) -> BandFit:
    """Fit A exp(-de^2 / 2 kappa^2) to the empirical off-diagonal variances, normalized by the level densities."""
    n = spec.n_levels
    k, l = np.triu_indices(n, 1)
    acc = np.zeros(len(k))
    count = 0
    for smp in samples:
        acc += np.abs(_component(smp.matrices, smp.symmetry, k, l)[x_index]) ** 2
        count += 1
    if count < 2:
        raise DomainError("fit_band_width needs at least two samples")
    eps = reference_spectrum(spec)
    rho = level_density(spec, eps)
    normalized = acc / count * 2.0 * np.pi * np.sqrt(rho[k] * rho[l]) / spec.spreading_width
    de = eps[l] - eps[k]
    guess = math.sqrt(float(np.sum(normalized * de**2) / np.sum(normalized)))

    def profile(x, amp, kappa):
        return amp * np.exp(-(x**2) / (2.0 * kappa**2))

    popt, pcov = curve_fit(profile, de, normalized, p0=[1.0, guess])
    return BandFit(abs(float(popt[1])), float(np.sqrt(pcov[1, 1])), float(popt[0]), count)
