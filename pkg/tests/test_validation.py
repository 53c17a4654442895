import numpy as np
import pytest

import validation as vd
from density_grid import GridSpec
from errors import DomainError
from physical_model import CorrelatorSpec, PhysicalParams


def test_report_bookkeeping():
    report = vd.ValidationReport()
    report.add("demo", "x", 1.0, {"expected": 1.0}, "pass")
    report.add("demo", "y", 2.0, {"quoted": -1.5}, "discrepant", "sign differs")
    assert report.passed
    assert report.get("y").note == "sign differs"
    frame = report.to_frame()
    assert list(frame["quantity"]) == ["x", "y"]
    assert "ref:quoted" in frame.columns
    report.add("demo", "z", 0.0, {}, "fail")
    assert not report.passed
    assert report.to_dict()["passed"] is False
    with pytest.raises(KeyError):
        report.get("w")
    with pytest.raises(ValueError):
        vd.Finding("demo", "q", 0.0, verdict="maybe")


def test_einstein_identity_check():
    report = vd.check_einstein_identity(n_draws=200, seed=3)
    assert report.passed
    assert report.findings[0].measured < 1e-12


@pytest.mark.parametrize("correlator", [CorrelatorSpec("gaussian"), CorrelatorSpec("levy", alpha=1.0)])
def test_decoherence_oracle(unit_params, correlator):
    report = vd.adjudicate_decoherence_oracle(unit_params, correlator)
    assert report.passed
    assert report.findings[0].measured < 1e-6


def test_levy_oracle_density_is_normalized():
    p = PhysicalParams(1.0, 1.0, 1.0, 1.0, 1.0)
    g = CorrelatorSpec("levy", alpha=1.5, completion="exponential")
    momenta = np.linspace(-30.0, 30.0, 601)
    density = vd.levy_oracle_density(momenta, p, g, 2.0, 0.5, 40.0)
    assert np.all(density > -1e-8)
    assert np.sum(density) * (momenta[1] - momenta[0]) == pytest.approx(1.0, abs=2e-2)


@pytest.mark.slow
def test_unitary_limit_returns_after_one_period():
    assert vd.adjudicate_unitary_limit().passed


@pytest.mark.slow
def test_free_propagator_dual_check(unit_params):
    report = vd.adjudicate_free_propagator(unit_params)
    assert report.get("evolver self-convergence order").verdict == "pass"
    assert report.get("residual of formula, equation without friction").measured < \
        report.get("residual of formula, full equation").measured


def test_stationary_fourth_cumulant_is_negative(unit_params):
    report, series = vd.adjudicate_equilibrium(unit_params, grid=GridSpec(32, 256, 160.0, 25.6))
    assert report.get("sign of <<P^4>>").verdict == "pass"
    assert report.get("<<P^4>> vs stationary solution").verdict == "pass"
    assert report.get("<<P^4>> vs quoted formula (n = 2)").verdict == "agrees"
    assert series.column("P", 4)[-1] == pytest.approx(-1.5, rel=0.02)
    assert series.column("P", 2)[-1] == pytest.approx(1.0, rel=0.02)


@pytest.mark.slow
def test_equilibrium_is_reached(unit_params):
    report, series = vd.adjudicate_equilibrium(unit_params)
    assert report.passed
    for quantity in ("<<P^2>> relative drift over steady state", "max |trace drift|", "max hermiticity defect",
                     "<<P^2>>", "max |chi - chi_eq|"):
        assert report.get(quantity).verdict == "pass"
    assert report.get("<<P^2>>").note.startswith("against 2MT: discrepant")
    assert series.column("P", 2)[-1] > series.column("P", 2)[0]


@pytest.mark.slow
def test_normal_diffusion():
    report, series, moments = vd.adjudicate_normal_diffusion(n_walkers=50_000)
    assert report.get("exponent nu of <<Q^2>>").verdict == "pass"
    assert report.get("d<<Q^2>>/dt").verdict == "pass"
    assert len(moments) > 10
    assert report.get("excess kurtosis shrinks with hbar").verdict == "pass"


def test_momentum_law_turns_gaussian_as_hbar_shrinks():
    p = PhysicalParams(mass=1.0, hbar=1.0, temperature=1.0, spreading_width=64.0, correlation_length=4.0)
    report, table = vd.adjudicate_classical_limit(p, factors=(0.25, 1.0, 0.5))
    assert table["factor"].tolist() == [1.0, 0.5, 0.25]
    assert table["hbar"].tolist() == pytest.approx([1.0, 0.5, 0.25])
    assert report.get("excess kurtosis shrinks with hbar").verdict == "pass"
    # stationary <<P^4>> / (MT)^2 = -1.5 hbar^2 / (M T X0^2): quadratic in the factor
    kurtosis = table["excess_kurtosis"].to_numpy()
    assert kurtosis[0] == pytest.approx(1.5 / 16.0, rel=0.05)
    assert kurtosis[1:] / kurtosis[:-1] == pytest.approx([0.25, 0.25], rel=0.15)
    assert np.all(table["P4"] < 0)
    for factor in (1, 0.5, 0.25):
        assert report.get(f"relative <<P^2>> gap vs Kramers at hbar x {factor:g}").verdict == "pass"
    with pytest.raises(DomainError):
        vd.adjudicate_classical_limit(p, factors=(1.0,))


@pytest.mark.slow
@pytest.mark.parametrize("alpha", [1.0, 1.5])
def test_levy_regime(alpha):
    report = vd.adjudicate_levy(alpha, grid=GridSpec(64, 16384, 800.0, 60.0))
    assert report.get(f"stable index (alpha = {alpha:g})").verdict == "pass"
