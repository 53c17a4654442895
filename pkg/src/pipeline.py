from __future__ import annotations
import argparse
import dataclasses
import glob
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

try:
    from . import analytic_solutions as an
    from .classical_limit import ClassicalCoefficients, coefficients, kramers_covariance, run_langevin, thermal_ensemble
    from .data_io import (REPORT_NAME, read_snapshot, read_summary, write_bath_sample, write_report_workbook,
                          write_snapshot, write_summary, write_table)
    from .density_grid import DensityMatrixGrid
    from .errors import ConfigError, DomainError, KinbathError, MissingArtifactError, NumericalAbort, VerificationFailure
    from .evolver import GeneratorTerms, evolve, residual_norm
    from .observables import (CumulantSeries, coordinate_tail_index, cumulant_series, fit_diffusion_exponent,
                              momentum_marginal, stable_tail_index, tail_exceedance, wigner_transform)
    from .physical_model import PhysicalParams
    from .rmt_bath import SYMMETRY_CLASSES, BathSample, compare_reports, fit_band_width, sample, sample_many, verify_covariance
    from .run_config import VALIDATION_CHECKS, RunConfig
    from . import validation as vd
except ImportError:
    import analytic_solutions as an
    from classical_limit import ClassicalCoefficients, coefficients, kramers_covariance, run_langevin, thermal_ensemble
    from data_io import (REPORT_NAME, read_snapshot, read_summary, write_bath_sample, write_report_workbook,
                         write_snapshot, write_summary, write_table)
    from density_grid import DensityMatrixGrid
    from errors import ConfigError, DomainError, KinbathError, MissingArtifactError, NumericalAbort, VerificationFailure
    from evolver import GeneratorTerms, evolve, residual_norm
    from observables import (CumulantSeries, coordinate_tail_index, cumulant_series, fit_diffusion_exponent,
                             momentum_marginal, stable_tail_index, tail_exceedance, wigner_transform)
    from physical_model import PhysicalParams
    from rmt_bath import SYMMETRY_CLASSES, BathSample, compare_reports, fit_band_width, sample, sample_many, verify_covariance
    from run_config import VALIDATION_CHECKS, RunConfig
    import validation as vd


logger = logging.getLogger("pipeline")

SUMMARY_NAME = "summary.json"
SNAPSHOT_DIR = "snapshots"
BATH_DIR = "bath"
PLOT_FILES = ("cumulants.tsv", "diagonal.tsv", "momentum.tsv", "wigner_slice.tsv", "fit_summary.tsv")
BAND_FIT_SAMPLES = 100
UNIT_PHYSICS = PhysicalParams(1.0, 1.0, 1.0, 1.0, 1.0)


def configure_logging(verbose: bool = False) -> None:
    log_dir = os.environ.get("LOG_DIR", "logs")
    os.makedirs(log_dir, exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if verbose else os.environ.get("LOG_LEVEL", "INFO"),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        handlers=[
            logging.FileHandler(os.path.join(log_dir, "kinbath.log")),
            logging.StreamHandler()
        ],
        force=True,
    )


@dataclass
class RunArtifacts:
    """Everything a job produced, before (and after) it is written under `run_dir`."""
    run_dir: str
    provenance: dict
    physics: PhysicalParams | None = None
    snapshots: list[DensityMatrixGrid] = field(default_factory=list)
    extra_snapshots: dict[str, DensityMatrixGrid] = field(default_factory=dict)
    bath: list[BathSample] = field(default_factory=list)
    series: CumulantSeries | None = None
    fits: list[dict] = field(default_factory=list)
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    failure: str = ""
    files: list[str] = field(default_factory=list)


# ---------------------------------------------------------------- helpers

def _fit(art: RunArtifacts, window: tuple[float, float], variable: str = "Q", order: int = 2) -> None:
    try:
        fit = fit_diffusion_exponent(art.series, window, variable, order)
    except DomainError as e:
        raise ConfigError("solver.fit_window", str(e)) from e
    art.fits.append({"variable": variable, "order": order, **fit.as_row()})


def _fit_rows(series: CumulantSeries) -> list[dict]:
    return [{"variable": var, "order": n, **fit.as_row()} for (var, n), fit in series.fits.items()]


def _times(cfg: RunConfig) -> list[float]:
    times = cfg.analytic.get("times")
    if not isinstance(times, list) or not times:
        raise ConfigError("analytic.times", "must be a non-empty list of times")
    try:
        out = sorted(float(v) for v in times)
    except (TypeError, ValueError) as e:
        raise ConfigError("analytic.times", "entries must be numbers") from e
    if out[0] < 0:
        raise ConfigError("analytic.times", "times must be non-negative")
    return out


def _require_free(cfg: RunConfig) -> None:
    if not cfg.potential.is_free:
        raise ConfigError("potential.kind", f"job '{cfg.job}' needs the free potential, got {cfg.potential.kind!r}")


def _tail_indices(rho: DensityMatrixGrid, p: PhysicalParams, workers: int | None) -> dict:
    """Stable-index fits of both marginals; None where the characteristic function is unusable."""
    fits = {"momentum": lambda: stable_tail_index(momentum_marginal(rho, p, workers=workers), p),
            "coordinate": lambda: coordinate_tail_index(rho)}
    out = {}
    for name, fit_of in fits.items():
        try:
            fit = fit_of()
        except DomainError as e:
            logger.warning("%s tail index unavailable: %s", name, e)
            out[name] = None
            continue
        out[name] = {"alpha": fit.alpha, "alpha_stderr": fit.alpha_stderr, "scale": fit.scale,
                     "window": list(fit.window), "n_points": fit.n_points}
    return out


def _trajectory_summary(traj) -> dict:
    log = traj.conservation
    out = {"final_time": traj.final.time_stamp, "n_snapshots": len(traj.snapshots),
           "stopped_early": traj.stopped_early, "diagnostic": traj.diagnostic,
           "max_trace_drift": float(log["trace_drift"].abs().max()) if len(log) else 0.0,
           "max_hermiticity_defect": float(log["hermiticity_defect"].max()) if len(log) else 0.0}
    if traj.positivity:
        out["min_eigenvalue_ratio"] = min(lam for _, lam in traj.positivity)
    return out


# ---------------------------------------------------------------- jobs

def job_evolve(cfg: RunConfig, art: RunArtifacts, progress: bool) -> None:
    p = cfg.physics
    rho0 = cfg.initial_density()
    traj = evolve(rho0, p, cfg.correlator, cfg.potential, dataclasses.replace(cfg.solver, progress=progress),
                  provenance=cfg.provenance())
    art.snapshots = traj.snapshots
    art.tables["conservation"] = traj.conservation
    if traj.positivity:
        art.tables["positivity"] = pd.DataFrame(traj.positivity, columns=["time", "min_eigenvalue_ratio"])
    # the snapshot that broke the trace tolerance is kept on disk but not analysed
    usable = traj.snapshots[:-1] if traj.stopped_early and len(traj.snapshots) > 1 else traj.snapshots
    art.series = cumulant_series(usable, p, q_orders=(1, 2), p_orders=(2, 4))
    if cfg.fit_window:
        _fit(art, cfg.fit_window)
    art.tables["tail_exceedance"] = tail_exceedance(usable[-1])
    art.summary["evolution"] = _trajectory_summary(traj)
    art.summary["tail_index"] = _tail_indices(usable[-1], p, cfg.threads)


def job_free_analytic(cfg: RunConfig, art: RunArtifacts, progress: bool) -> None:
    _require_free(cfg)
    p, g = cfg.physics, cfg.correlator
    rho0 = cfg.initial_density()
    interpolation = cfg.analytic.get("interpolation", "fourier")
    try:
        art.snapshots = [an.free_propagate(rho0, p, g, t, interpolation, workers=cfg.threads) for t in _times(cfg)]
    except DomainError as e:
        raise ConfigError("analytic", str(e)) from e
    art.series = cumulant_series(art.snapshots, p, q_orders=(1, 2), p_orders=(2, 4))
    if cfg.fit_window:
        _fit(art, cfg.fit_window)
    summary = {"max_safe_time": an.max_safe_time(rho0, p), "interpolation": interpolation}
    if len(art.snapshots) >= 3:
        summary["residual_norm"] = residual_norm(art.snapshots, p, g, cfg.potential, GeneratorTerms(), cfg.threads)
        summary["residual_norm_without_friction"] = residual_norm(art.snapshots, p, g, cfg.potential,
                                                                  GeneratorTerms(friction=False), cfg.threads)
    art.summary["free_analytic"] = summary


def job_decoherence(cfg: RunConfig, art: RunArtifacts, progress: bool) -> None:
    p, g = cfg.physics, cfg.correlator
    rho0 = cfg.initial_density()
    art.snapshots = [an.decoherence_limit(rho0, p, g, t) for t in _times(cfg)]
    art.series = cumulant_series(art.snapshots, p, q_orders=(1, 2), p_orders=(2, 4))
    final = art.snapshots[-1]
    summary = {"off_diagonal_mass_ratio": final.off_diagonal_mass() / max(rho0.off_diagonal_mass(), 1e-300)}
    art.summary["decoherence"] = summary
    art.summary["tail_index"] = _tail_indices(final, p, cfg.threads)


def job_langevin(cfg: RunConfig, art: RunArtifacts, progress: bool) -> None:
    p, lb = cfg.physics, cfg.langevin
    for key in ("n_walkers", "dt", "n_steps"):
        if key not in lb:
            raise ConfigError(f"langevin.{key}", "missing")
    # no bath: free ballistic flight
    c = coefficients(p) if lb.get("bath", True) else ClassicalCoefficients(0.0, math.inf, 0.0)
    sigma_q = float(lb.get("sigma_q", 1.0))
    sigma_p = float(lb["sigma_p"]) if lb.get("sigma_p") is not None else math.sqrt(p.mass * p.temperature)
    try:
        ens = thermal_ensemble(int(lb["n_walkers"]), p, float(lb.get("q0", 0.0)), sigma_q, cfg.seed,
                               sigma_p=sigma_p, p0=float(lb.get("p0", 0.0)))
        _, moments = run_langevin(ens, c, cfg.potential, p, float(lb["dt"]), int(lb["n_steps"]),
                                  record_every=int(lb.get("record_every", 1)),
                                  integrator=str(lb.get("integrator", "euler-maruyama")), progress=progress)
    except DomainError as e:
        raise ConfigError("langevin", str(e)) from e
    art.tables["langevin"] = moments
    art.series = CumulantSeries(moments["time"].to_numpy(), {
        ("Q", 1): moments["q_mean"].to_numpy(), ("Q", 2): moments["q_var"].to_numpy(),
        ("P", 1): moments["p_mean"].to_numpy(), ("P", 2): moments["p_var"].to_numpy()})
    if cfg.fit_window:
        _fit(art, cfg.fit_window)
    summary = {"gamma": c.gamma, "d_qq": c.d_qq, "d_pp": c.d_pp, "bath": bool(lb.get("bath", True)),
               "final": moments.iloc[-1].to_dict()}
    if cfg.potential.is_free:
        kramers = kramers_covariance(moments["time"].to_numpy(), p, sigma_q**2, sigma_p**2, c=c)
        art.tables["kramers"] = kramers
        summary["max_relative_q_var_gap_vs_moment_equations"] = float(
            np.max(np.abs(moments["q_var"].to_numpy() / kramers["q_var"].to_numpy() - 1.0)))
    art.summary["langevin"] = summary


def _audit(cfg: RunConfig, spec, progress: bool):
    e = cfg.ensemble
    return verify_covariance(sample_many(spec, cfg.seed, int(e.get("n_samples", 500)), progress), spec,
                             n_law=int(e.get("n_law", 200)), n_zero=int(e.get("n_zero", 200)),
                             audit_seed=int(e.get("audit_seed", 0)))


def job_rmt_verify(cfg: RunConfig, art: RunArtifacts, progress: bool) -> None:
    spec = cfg.ensemble_spec()
    report = _audit(cfg, spec, progress)
    art.bath = [sample(spec, cfg.seed, 0)]
    art.tables[f"covariance_{spec.symmetry}"] = report.entries
    art.summary["covariance"] = {spec.symmetry: report.summary()}
    failures = [] if report.passed else [f"{spec.symmetry} covariance law"]

    n_band = min(int(cfg.ensemble.get("n_samples", 500)), BAND_FIT_SAMPLES)
    try:
        band = fit_band_width(sample_many(spec, cfg.seed, n_band), spec)
        art.summary["band_fit"] = {"kappa0": band.kappa0, "kappa0_stderr": band.kappa0_stderr,
                                   "configured_kappa0": spec.kappa0, "n_samples": band.n_samples}
    except RuntimeError as e:
        logger.warning("band-width fit did not converge: %s", e)

    comparisons = {}
    for other in cfg.ensemble.get("compare_classes", []) or []:
        if other not in SYMMETRY_CLASSES:
            raise ConfigError("ensemble.compare_classes", f"must be drawn from {', '.join(SYMMETRY_CLASSES)}")
        if other == spec.symmetry:
            continue
        # same number of independent levels so the audited index sets coincide
        dimension = spec.n_levels * (2 if other == "GSE" else 1)
        try:
            other_spec = dataclasses.replace(spec, symmetry=other, dimension=dimension)
        except DomainError as err:
            raise ConfigError("ensemble.compare_classes", str(err)) from err
        other_report = _audit(cfg, other_spec, progress)
        art.tables[f"covariance_{other}"] = other_report.entries
        art.summary["covariance"][other] = other_report.summary()
        cmp = compare_reports(report, other_report)
        art.tables[f"compare_{spec.symmetry}_{other}"] = cmp.entries
        comparisons[f"{spec.symmetry}-{other}"] = {"max_abs_z": cmp.max_abs_z, "threshold": cmp.threshold,
                                                   "passed": cmp.passed}
        if not other_report.passed:
            failures.append(f"{other} covariance law")
        if not cmp.passed:
            failures.append(f"{spec.symmetry} vs {other} distinguishable")
    if comparisons:
        art.summary["class_comparison"] = comparisons
    art.summary["passed"] = not failures
    art.failure = "; ".join(failures)


def job_compare(cfg: RunConfig, art: RunArtifacts, progress: bool) -> None:
    """Evolver against the free-motion formula at the evolver's final time."""
    _require_free(cfg)
    p, g, u = cfg.physics, cfg.correlator, cfg.potential
    rho0 = cfg.initial_density()
    traj = evolve(rho0, p, g, u, dataclasses.replace(cfg.solver, progress=progress), provenance=cfg.provenance())
    art.snapshots = traj.snapshots
    art.tables["conservation"] = traj.conservation
    elapsed = traj.final.time_stamp - rho0.time_stamp
    interpolation = cfg.analytic.get("interpolation", "fourier")
    try:
        formula = an.free_propagate(rho0, p, g, elapsed, interpolation, workers=cfg.threads)
        h = 1e-3 * elapsed
        slices = [an.free_propagate(rho0, p, g, t, interpolation, workers=cfg.threads)
                  for t in (elapsed - h, elapsed, elapsed + h)]
    except DomainError as e:
        raise ConfigError("grid.s_extent", str(e)) from e
    art.extra_snapshots["analytic_final"] = formula
    diff = float(np.max(np.abs(traj.final.values - formula.values)))
    usable = traj.snapshots[:-1] if traj.stopped_early and len(traj.snapshots) > 1 else traj.snapshots
    art.series = cumulant_series(usable, p, q_orders=(1, 2), p_orders=(2, 4))
    art.summary["evolution"] = _trajectory_summary(traj)
    art.summary["compare"] = {
        "time": elapsed,
        "linf_discrepancy": diff,
        "relative_linf_discrepancy": diff / float(np.max(np.abs(formula.values))),
        "residual_norm_analytic": residual_norm(slices, p, g, u, GeneratorTerms(), cfg.threads),
        "residual_norm_analytic_without_friction": residual_norm(slices, p, g, u, GeneratorTerms(friction=False),
                                                                 cfg.threads),
    }
    logger.info("compare: L_inf discrepancy %.4g, residual of the free-motion formula %.4g",
                diff, art.summary["compare"]["residual_norm_analytic"])


def job_validate(cfg: RunConfig, art: RunArtifacts, progress: bool) -> None:
    v = cfg.validation
    checks = v.get("checks") or list(VALIDATION_CHECKS)
    p = cfg.physics or UNIT_PHYSICS
    report = vd.ValidationReport()
    for check in checks:
        logger.info("validation check: %s", check)
        if check == "einstein":
            report.extend(vd.check_einstein_identity(seed=cfg.seed))
        elif check == "unitary":
            report.extend(vd.adjudicate_unitary_limit(workers=cfg.threads))
        elif check == "decoherence":
            report.extend(vd.adjudicate_decoherence_oracle(p, cfg.correlator))
        elif check == "equilibrium":
            sub, series = vd.adjudicate_equilibrium(p, workers=cfg.threads, progress=progress)
            report.extend(sub)
            art.tables["equilibrium_cumulants"] = series.to_frame()
            art.series = art.series or series
        elif check == "free-propagator":
            report.extend(vd.adjudicate_free_propagator(p, workers=cfg.threads))
        elif check == "normal-diffusion":
            sub, series, moments = vd.adjudicate_normal_diffusion(n_walkers=int(v.get("n_walkers", 100_000)),
                                                                  seed=cfg.seed, workers=cfg.threads,
                                                                  progress=progress)
            report.extend(sub)
            art.tables["diffusion_cumulants"] = series.to_frame()
            art.tables["diffusion_langevin"] = moments
            art.fits.extend(_fit_rows(series))
            art.series = series
        elif check == "levy":
            for alpha in v.get("levy_alphas", (1.0, 1.5)):
                report.extend(vd.adjudicate_levy(float(alpha), workers=cfg.threads))
    art.tables["validation"] = report.to_frame()
    art.summary["validation"] = report.to_dict()
    if not report.passed:
        failed = [f"{f.check}: {f.quantity}" for f in report.findings if f.verdict == "fail"]
        art.failure = "; ".join(failed)


def job_equilibrium(cfg: RunConfig, art: RunArtifacts, progress: bool) -> None:
    kwargs = {}
    if cfg.grid is not None:
        kwargs["grid"] = cfg.grid
    if cfg.solver is not None:
        kwargs.update(dt=cfg.solver.dt, t_end=cfg.solver.dt * cfg.solver.n_steps)
    if cfg.initial_state is not None:
        kwargs.update(sigma_q=cfg.initial_state.sigma_q, sigma_p0=cfg.initial_state.sigma_p)
    report, series = vd.adjudicate_equilibrium(cfg.physics, cfg.correlator, workers=cfg.threads,
                                               progress=progress, **kwargs)
    art.series = series
    art.tables["validation"] = report.to_frame()
    art.summary["validation"] = report.to_dict()
    if not report.passed:
        art.failure = "; ".join(f"{f.check}: {f.quantity}" for f in report.findings if f.verdict == "fail")


JOBS = {
    "evolve": job_evolve,
    "free-analytic": job_free_analytic,
    "decoherence": job_decoherence,
    "langevin": job_langevin,
    "rmt-verify": job_rmt_verify,
    "compare": job_compare,
    "validate": job_validate,
    "equilibrium": job_equilibrium,
}


# ---------------------------------------------------------------- outputs

def emit_plot_data(art: RunArtifacts, wigner_stride: int = 4, workers: int | None = None) -> list[str]:
    """Columnar text for plotting: cumulants, diagonal, momentum density, Wigner slice and fits."""
    if not os.path.isdir(art.run_dir):
        raise MissingArtifactError(f"run directory {art.run_dir} does not exist")
    if not art.snapshots and art.series is None:
        raise MissingArtifactError(f"{art.run_dir}: no snapshots or cumulant series to emit")
    written = []
    path = lambda name: os.path.join(art.run_dir, name)  # noqa: E731
    if art.series is not None:
        written.append(write_table(art.series.to_frame(), path("cumulants.tsv"), art.provenance))
    if art.fits:
        written.append(write_table(pd.DataFrame(art.fits), path("fit_summary.tsv"), art.provenance))
    if art.snapshots:
        if art.physics is None:
            raise MissingArtifactError(f"{art.run_dir}: physical parameters are needed for phase-space output")
        final = art.snapshots[-1]
        header = {**art.provenance, "t": f"{final.time_stamp:.12g}"}
        diag = pd.DataFrame({"r": final.spec.r, "density": np.real(final.diagonal())})
        written.append(write_table(diag, path("diagonal.tsv"), header))
        written.append(write_table(momentum_marginal(final, art.physics, workers).to_frame(),
                                   path("momentum.tsv"), header))
        written.append(write_table(wigner_transform(final, art.physics, workers).to_frame(wigner_stride),
                                   path("wigner_slice.tsv"), header))
    logger.info("plot data: %s", ", ".join(os.path.basename(f) for f in written))
    return written


def write_artifacts(art: RunArtifacts, cfg: RunConfig) -> None:
    seed, chash = cfg.seed, cfg.config_hash
    for i, snap in enumerate(art.snapshots):
        name = os.path.join(art.run_dir, SNAPSHOT_DIR, f"snap_{i:04d}.bin")
        write_snapshot(name, snap, seed, chash)
        art.files.append(name)
    for label, snap in art.extra_snapshots.items():
        name = os.path.join(art.run_dir, f"{label}.bin")
        write_snapshot(name, snap, seed, chash)
        art.files.append(name)
    for smp in art.bath:
        name = os.path.join(art.run_dir, BATH_DIR, f"member_{smp.member:04d}.bin")
        write_bath_sample(name, smp, seed, chash)
        art.files.append(name)
    for label, df in art.tables.items():
        art.files.append(write_table(df, os.path.join(art.run_dir, f"{label}.tsv"), art.provenance))
    if art.snapshots or art.series is not None:
        art.files.extend(emit_plot_data(art, cfg.wigner_stride, cfg.threads))
    if cfg.workbook:
        sheets = dict(art.tables)
        if art.series is not None:
            sheets["cumulants"] = art.series.to_frame()
        if art.fits:
            sheets["fits"] = pd.DataFrame(art.fits)
        if sheets:
            art.files.append(write_report_workbook(os.path.join(art.run_dir, REPORT_NAME), sheets, art.provenance))
    art.summary["files"] = sorted(os.path.relpath(f, art.run_dir) for f in art.files)
    if art.fits:
        art.summary["fits"] = art.fits
    write_summary(os.path.join(art.run_dir, SUMMARY_NAME), art.summary)


def run(cfg: RunConfig, progress: bool = False) -> RunArtifacts:
    run_dir = os.path.join(cfg.out_dir, f"{cfg.job}-{cfg.config_hash}")
    os.makedirs(run_dir, exist_ok=True)
    art = RunArtifacts(run_dir, cfg.provenance(), cfg.physics)
    art.summary.update(cfg.provenance())
    if cfg.physics is not None:
        art.summary["physics"] = dataclasses.asdict(cfg.physics)
    logger.info("job %s (config %s, seed %d) -> %s", cfg.job, cfg.config_hash, cfg.seed, run_dir)
    try:
        JOBS[cfg.job](cfg, art, progress)
    except NumericalAbort as e:
        if e.last_valid is not None:
            write_snapshot(os.path.join(run_dir, "last_valid.bin"), e.last_valid, cfg.seed, cfg.config_hash)
        art.summary["aborted"] = str(e)
        write_summary(os.path.join(run_dir, SUMMARY_NAME), art.summary)
        raise
    write_artifacts(art, cfg)
    if art.failure:
        raise VerificationFailure(art.failure)
    logger.info("job %s done: %d files in %s", cfg.job, len(art.files), run_dir)
    return art


def load_artifacts(run_dir: str) -> RunArtifacts:
    """Rebuild the plot inputs of a finished run from its summary and snapshots."""
    summary_path = os.path.join(run_dir, SUMMARY_NAME)
    if not os.path.isfile(summary_path):
        raise MissingArtifactError(f"{run_dir}: no {SUMMARY_NAME}")
    summary = read_summary(summary_path)
    files = sorted(glob.glob(os.path.join(run_dir, SNAPSHOT_DIR, "snap_*.bin")))
    if not files:
        raise MissingArtifactError(f"{run_dir}: no snapshots under {SNAPSHOT_DIR}/")
    if "physics" not in summary:
        raise MissingArtifactError(f"{summary_path}: physical parameters missing")
    physics = PhysicalParams(**summary["physics"])
    snapshots = [read_snapshot(f)[0] for f in files]
    provenance = {k: summary[k] for k in ("job", "seed", "config_hash") if k in summary}
    art = RunArtifacts(run_dir, provenance, physics, snapshots=snapshots, summary=summary,
                       fits=list(summary.get("fits", [])))
    stopped = summary.get("evolution", {}).get("stopped_early", False)
    usable = snapshots[:-1] if stopped and len(snapshots) > 1 else snapshots
    art.series = cumulant_series(usable, physics, q_orders=(1, 2), p_orders=(2, 4))
    return art


# ---------------------------------------------------------------- CLI

def cmd_run(args):
    cfg = RunConfig.from_yaml(args.config).apply_overrides(seed=args.seed, out_dir=args.out, threads=args.threads)
    art = run(cfg, progress=args.progress)
    print(f"{cfg.job} finished: {art.run_dir}")


def cmd_plot_data(args):
    art = load_artifacts(args.run_dir)
    for path in emit_plot_data(art, args.stride, args.threads):
        print(path)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kinbath", description="Kinetic equation of a subsystem in a random-matrix bath")
    sp = p.add_subparsers(dest="cmd", required=True)

    sp_run = sp.add_parser("run", help="Run the job described by a YAML config")
    sp_run.add_argument("config", help="Path to the run configuration (YAML)")
    sp_run.add_argument("--seed", type=int, default=None, help="Override the config seed (unsigned 64-bit)")
    sp_run.add_argument("--out", default=None, help="Output directory (overrides KINBATH_OUT_DIR and the config)")
    sp_run.add_argument("--threads", type=int, default=None, help="FFT worker threads")
    sp_run.add_argument("--verbose", action="store_true", help="DEBUG logging")
    sp_run.add_argument("--progress", action="store_true", help="Show progress bars for long loops")
    sp_run.set_defaults(func=cmd_run)

    sp_plot = sp.add_parser("plot-data", help="Re-emit columnar plot data from a finished run directory")
    sp_plot.add_argument("run_dir", help="Run directory holding summary.json and snapshots/")
    sp_plot.add_argument("--stride", type=int, default=4, help="Wigner slice subsampling")
    sp_plot.add_argument("--threads", type=int, default=None, help="FFT worker threads")
    sp_plot.add_argument("--verbose", action="store_true", help="DEBUG logging")
    sp_plot.set_defaults(func=cmd_plot_data)

    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        args.func(args)
    except NumericalAbort as e:
        logger.error("numerical abort: %s (last valid snapshot at t = %s)", e,
                     "n/a" if e.last_valid is None else f"{e.last_valid.time_stamp:.6g}")
        return e.exit_code
    except KinbathError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
