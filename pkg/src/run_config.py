"""YAML run configuration: parsing, field-level validation and environment overrides."""
from __future__ import annotations
import dataclasses
import hashlib
import json
import logging
import math
import os
import typing as t
from dataclasses import dataclass, field

import yaml
from dotenv import load_dotenv
from rapidfuzz import fuzz, process

try:
    from .density_grid import (DensityMatrixGrid, GridSpec, coherent_state, gaussian_mixed_state,
                               gaussian_pure_state, thermal_state)
    from .errors import ConfigError, DomainError
    from .evolver import GeneratorTerms, SolverOptions
    from .physical_model import CorrelatorSpec, PhysicalParams, PotentialSpec
    from .rmt_bath import EnsembleSpec
except ImportError:
    from density_grid import (DensityMatrixGrid, GridSpec, coherent_state, gaussian_mixed_state,
                              gaussian_pure_state, thermal_state)
    from errors import ConfigError, DomainError
    from evolver import GeneratorTerms, SolverOptions
    from physical_model import CorrelatorSpec, PhysicalParams, PotentialSpec
    from rmt_bath import EnsembleSpec

load_dotenv()

logger = logging.getLogger(__name__)

JOB_KINDS = ("evolve", "free-analytic", "decoherence", "langevin", "rmt-verify", "compare", "validate", "equilibrium")
VALIDATION_CHECKS = ("einstein", "unitary", "decoherence", "equilibrium", "free-propagator", "normal-diffusion", "levy")

SCHEMA: dict[str, tuple[str, ...]] = {
    "physics": ("mass", "hbar", "temperature", "spreading_width", "correlation_length"),
    "correlator": ("family", "alpha", "completion", "lower_clamp", "table_x", "table_g"),
    "potential": ("kind", "slope", "stiffness", "a", "b", "table_q", "table_u"),
    "grid": ("nr", "ns", "r_extent", "s_extent"),
    "initial_state": ("kind", "q0", "p0", "sigma_q", "sigma_p", "stiffness"),
    "solver": ("dt", "n_steps", "scheme", "snapshot_stride", "dealias", "trace_tolerance", "hermiticity_tolerance",
               "absorb_width", "positivity_check", "terms", "fit_window"),
    "analytic": ("times", "interpolation"),
    "langevin": ("n_walkers", "dt", "n_steps", "record_every", "integrator", "q0", "p0", "sigma_q", "sigma_p", "bath"),
    "ensemble": ("dimension", "symmetry", "rho0", "beta", "kappa0", "x_points", "n_samples", "n_law", "n_zero",
                 "audit_seed", "compare_classes"),
    "validation": ("checks", "levy_alphas", "n_walkers"),
    "output": ("dir", "wigner_stride", "workbook"),
}
TOP_LEVEL = ("job", "seed") + tuple(SCHEMA)
REQUIRED: dict[str, tuple[str, ...]] = {
    "evolve": ("physics", "grid", "initial_state", "solver"),
    "free-analytic": ("physics", "grid", "initial_state", "analytic"),
    "decoherence": ("physics", "grid", "initial_state", "analytic"),
    "langevin": ("physics", "langevin"),
    "rmt-verify": ("physics", "ensemble"),
    "compare": ("physics", "grid", "initial_state", "solver"),
    "validate": (),
    "equilibrium": ("physics",),
}
TERM_KEYS = tuple(f.name for f in dataclasses.fields(GeneratorTerms))
STATE_KINDS = ("gaussian", "pure", "thermal", "coherent")


def _suggest(key: str, choices: t.Sequence[str]) -> str:
    best = process.extractOne(key, choices, scorer=fuzz.ratio, score_cutoff=60)
    return f"unknown key; did you mean '{best[0]}'?" if best else f"unknown key; expected one of {', '.join(choices)}"


def _check_keys(block: dict, allowed: t.Sequence[str], prefix: str) -> None:
    for key in block:
        if key not in allowed:
            raise ConfigError(f"{prefix}{key}", _suggest(str(key), allowed))


@dataclass(frozen=True)
class InitialState:
    kind: str = "gaussian"
    q0: float = 0.0
    p0: float = 0.0
    sigma_q: float = 1.0
    sigma_p: float | None = None
    stiffness: float = 1.0

    def build(self, grid: GridSpec, p: PhysicalParams) -> DensityMatrixGrid:
        if self.kind == "pure":
            return gaussian_pure_state(grid, p.hbar, self.q0, self.sigma_q, self.p0)
        if self.kind == "thermal":
            return thermal_state(grid, p, self.q0, self.sigma_q, self.p0)
        if self.kind == "coherent":
            return coherent_state(grid, p, self.stiffness, self.q0, self.p0)
        sigma_p = self.sigma_p if self.sigma_p is not None else p.hbar / (2.0 * self.sigma_q)
        return gaussian_mixed_state(grid, p.hbar, self.q0, self.sigma_q, sigma_p, self.p0)


@dataclass
class RunConfig:
    job: str
    seed: int = 0
    physics: PhysicalParams | None = None
    correlator: CorrelatorSpec = field(default_factory=CorrelatorSpec)
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    grid: GridSpec | None = None
    initial_state: InitialState | None = None
    solver: SolverOptions | None = None
    fit_window: tuple[float, float] | None = None
    analytic: dict = field(default_factory=dict)
    langevin: dict = field(default_factory=dict)
    ensemble: dict = field(default_factory=dict)
    validation: dict = field(default_factory=dict)
    out_dir: str = "runs"
    threads: int | None = None
    wigner_stride: int = 4
    workbook: bool = True
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_yaml(cls, path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(path, f"not valid YAML: {e}") from e
        except OSError as e:
            raise ConfigError(path, f"cannot read config: {e.strerror}") from e
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a mapping of blocks")
        _check_keys(data, TOP_LEVEL, "")
        job = data.get("job")
        if job not in JOB_KINDS:
            raise ConfigError("job", f"must be one of {', '.join(JOB_KINDS)}, got {job!r}")
        for name in REQUIRED[job]:
            if not isinstance(data.get(name), dict):
                raise ConfigError(name, f"block required for job '{job}'")
        for name in SCHEMA:
            block = data.get(name)
            if block is None:
                continue
            if not isinstance(block, dict):
                raise ConfigError(name, "must be a mapping")
            _check_keys(block, SCHEMA[name], f"{name}.")

        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {seed!r}")

        cfg = cls(job=job, seed=seed, raw=json.loads(json.dumps(data, default=str)))
        for key, value in (data.get("physics") or {}).items():
            if not (isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value) and value > 0):
                raise ConfigError(f"physics.{key}", f"must be a finite number > 0, got {value!r}")
        cfg.physics = _build("physics", PhysicalParams, data.get("physics"))
        cfg.correlator = _build("correlator", CorrelatorSpec, _tuples(data.get("correlator") or {}))
        cfg.potential = _build("potential", PotentialSpec, _tuples(data.get("potential") or {}))
        cfg.grid = _build("grid", GridSpec, data.get("grid"))
        cfg.initial_state = _build("initial_state", InitialState, data.get("initial_state"))
        if cfg.initial_state and cfg.initial_state.kind not in STATE_KINDS:
            raise ConfigError("initial_state.kind", f"must be one of {', '.join(STATE_KINDS)}")
        solver = dict(data.get("solver") or {})
        window = solver.pop("fit_window", None)
        if window is not None:
            if not (isinstance(window, list) and len(window) == 2):
                raise ConfigError("solver.fit_window", "must be a two-element list [t_start, t_end]")
            cfg.fit_window = (float(window[0]), float(window[1]))
        if "terms" in solver:
            terms = solver["terms"] or {}
            _check_keys(terms, TERM_KEYS, "solver.terms.")
            solver["terms"] = GeneratorTerms(**terms)
        # a block holding only fit_window (langevin, free-analytic) carries no solver
        if solver or "solver" in REQUIRED[job]:
            cfg.solver = _build("solver", SolverOptions, solver)
        cfg.analytic = dict(data.get("analytic") or {})
        cfg.langevin = dict(data.get("langevin") or {})
        cfg.ensemble = dict(data.get("ensemble") or {})
        cfg.validation = dict(data.get("validation") or {})
        for check in cfg.validation.get("checks", []):
            if check not in VALIDATION_CHECKS:
                raise ConfigError("validation.checks", _suggest(str(check), VALIDATION_CHECKS))
        output = data.get("output") or {}
        cfg.out_dir = str(output.get("dir", cfg.out_dir))
        cfg.wigner_stride = int(output.get("wigner_stride", cfg.wigner_stride))
        cfg.workbook = bool(output.get("workbook", cfg.workbook))
        if job == "rmt-verify":
            cfg.ensemble_spec()
        return cfg

    def apply_overrides(self, seed: int | None = None, out_dir: str | None = None, threads: int | None = None) -> "RunConfig":
        """CLI flag > environment (KINBATH_OUT_DIR, KINBATH_THREADS) > config file."""
        env_out = os.environ.get("KINBATH_OUT_DIR")
        env_threads = os.environ.get("KINBATH_THREADS")
        if out_dir is not None:
            self.out_dir = out_dir
        elif env_out:
            self.out_dir = env_out
        if threads is not None:
            self.threads = threads
        elif env_threads:
            try:
                self.threads = int(env_threads)
            except ValueError as e:
                raise ConfigError("KINBATH_THREADS", f"must be an integer, got {env_threads!r}") from e
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads", f"must be >= 1, got {self.threads}")
        if seed is not None:
            if not 0 <= seed < 2**64:
                raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {seed}")
            self.seed = seed
        if self.solver is not None:
            self.solver = dataclasses.replace(self.solver, workers=self.threads)
        return self

    @property
    def config_hash(self) -> str:
        """First 16 hex digits of SHA-256 over the canonical config; output location and threads excluded."""
        payload = {k: v for k, v in self.raw.items() if k != "output"}
        payload["seed"] = self.seed
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"job": self.job, "seed": self.seed, "config_hash": self.config_hash}

    def initial_density(self) -> DensityMatrixGrid:
        if self.grid is None or self.initial_state is None or self.physics is None:
            raise ConfigError("initial_state", "needs physics, grid and initial_state blocks")
        try:
            return self.initial_state.build(self.grid, self.physics)
        except DomainError as e:
            raise ConfigError("initial_state", str(e)) from e

    def ensemble_spec(self, symmetry: str | None = None) -> EnsembleSpec:
        if self.physics is None:
            raise ConfigError("physics", "block required for the random-matrix bath")
        e = self.ensemble
        for key in ("dimension", "symmetry", "rho0", "kappa0", "x_points"):
            if key not in e:
                raise ConfigError(f"ensemble.{key}", "missing")
        try:
            return EnsembleSpec(dimension=int(e["dimension"]), symmetry=symmetry or str(e["symmetry"]),
                                rho0=float(e["rho0"]), beta=float(e.get("beta", 1.0 / self.physics.temperature)),
                                kappa0=float(e["kappa0"]), spreading_width=self.physics.spreading_width,
                                correlation_length=self.physics.correlation_length, correlator=self.correlator,
                                x_points=tuple(float(x) for x in e["x_points"]))
        except DomainError as err:
            raise ConfigError("ensemble", str(err)) from err


def _tuples(block: dict) -> dict:
    """Inline YAML lists become tuples so the specs stay hashable."""
    return {k: tuple(v) if isinstance(v, list) else v for k, v in block.items()}


def _build(name: str, factory: t.Callable, block: dict | None):
    if block is None:
        return None
    for f in dataclasses.fields(factory):
        required = f.init and f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
        if required and f.name not in block:
            raise ConfigError(f"{name}.{f.name}", "missing")
    try:
        return factory(**block)
    except TypeError as e:
        raise ConfigError(name, str(e)) from e
    except DomainError as e:
        raise ConfigError(name, str(e)) from e

