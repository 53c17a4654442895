import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import expi

import analytic_solutions as an
from density_grid import GridSpec, gaussian_mixed_state, gaussian_pure_state
from errors import AliasingError, DomainError
from physical_model import CorrelatorSpec, PhysicalParams, correlator_eval


@pytest.fixture
def free_grid():
    return GridSpec(128, 128, 40.0, 20.0)


def _variance(rho):
    r = rho.spec.r
    d = np.real(rho.diagonal())
    return float(np.sum(r**2 * d) / np.sum(d))


def test_decoherence_limit_keeps_diagonal(small_grid, unit_params, gaussian_correlator):
    rho0 = gaussian_mixed_state(small_grid, 1.0, 0.0, 1.0, 0.6)
    rho = an.decoherence_limit(rho0, unit_params, gaussian_correlator, 2.0)
    np.testing.assert_allclose(rho.diagonal(), rho0.diagonal())
    s = small_grid.s
    factor = np.exp(2.0 * (np.exp(-0.5 * s**2) - 1.0))
    np.testing.assert_allclose(rho.values, rho0.values * factor[None, :], rtol=1e-12)
    assert rho.time_stamp == 2.0
    with pytest.raises(DomainError):
        an.decoherence_limit(rho0, unit_params, gaussian_correlator, -1.0)


def test_free_propagate_identity_at_zero(free_grid, unit_params, gaussian_correlator):
    rho0 = gaussian_pure_state(free_grid, 1.0, 0.0, 1.0)
    out = an.free_propagate(rho0, unit_params, gaussian_correlator, 0.0)
    np.testing.assert_array_equal(out.values, rho0.values)


def test_free_propagate_without_bath_spreads_ballistically(free_grid, gaussian_correlator):
    p = PhysicalParams(1.0, 1.0, 1.0, 1e-12, 1.0)
    rho0 = gaussian_pure_state(free_grid, 1.0, 0.0, 1.0)
    rho = an.free_propagate(rho0, p, gaussian_correlator, 1.0)
    # sigma_q^2 + sigma_p^2 t^2 / M^2 with sigma_p = hbar / 2 sigma_q
    assert _variance(rho) == pytest.approx(1.25, rel=1e-6)
    assert rho.trace() == pytest.approx(rho0.trace(), abs=1e-12)


def test_free_propagate_conserves_trace_with_bath(free_grid, unit_params, gaussian_correlator):
    rho0 = gaussian_pure_state(free_grid, 1.0, 0.0, 1.0)
    rho = an.free_propagate(rho0, unit_params, gaussian_correlator, 1.0)
    assert rho.trace() == pytest.approx(1.0, abs=1e-10)
    assert rho.hermiticity_defect() < 1e-5


def test_aliasing_guard_matches_max_safe_time(free_grid, unit_params, gaussian_correlator):
    rho0 = gaussian_pure_state(free_grid, 1.0, 0.0, 1.0)
    safe = an.max_safe_time(rho0, unit_params)
    assert 0.0 < safe < math.inf
    an.free_propagate(rho0, unit_params, gaussian_correlator, 0.9 * safe)
    with pytest.raises(AliasingError):
        an.free_propagate(rho0, unit_params, gaussian_correlator, 1.1 * safe)


def test_interpolation_modes_agree(free_grid, unit_params, gaussian_correlator):
    rho0 = gaussian_mixed_state(free_grid, 1.0, 0.0, 1.5, 0.5)
    a = an.free_propagate(rho0, unit_params, gaussian_correlator, 0.5, interpolation="fourier")
    b = an.free_propagate(rho0, unit_params, gaussian_correlator, 0.5, interpolation="cubic")
    assert np.max(np.abs(a.values - b.values)) < 1e-3 * np.max(np.abs(a.values))
    with pytest.raises(DomainError):
        an.free_propagate(rho0, unit_params, gaussian_correlator, 0.5, interpolation="linear")


def test_window_mean_matches_quadrature(gaussian_correlator):
    s = np.array([0.5, 2.0])
    got = an.window_mean(gaussian_correlator, 1.0, s, 1.0)
    for value, upper in zip(got, s):
        expected, _ = quad(lambda x: math.exp(-0.5 * x * x) - 1.0, upper - 1.0, upper)
        assert value == pytest.approx(expected, rel=1e-9)
    np.testing.assert_allclose(an.window_mean(gaussian_correlator, 1.0, s, 0.0),
                               correlator_eval(gaussian_correlator, s) - 1.0)


def test_cumulant_formulas(unit_params):
    assert an.momentum_cumulant_formula(2, unit_params) == pytest.approx(-1.5)
    assert an.momentum_cumulant_formula(3, unit_params) == pytest.approx(5.0)
    assert an.maxwellian_comparator(unit_params) == pytest.approx(1.0)
    assert an.equilibrium_p2(unit_params) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        an.momentum_cumulant_formula(1, unit_params)


def test_stationary_cumulants_alternate_in_sign(unit_params):
    assert an.stationary_momentum_cumulant(1, unit_params) == pytest.approx(1.0)
    assert an.stationary_momentum_cumulant(2, unit_params) == pytest.approx(-1.5)
    assert an.stationary_momentum_cumulant(3, unit_params) == pytest.approx(5.0)
    for n in (2, 3, 4):
        assert an.stationary_momentum_cumulant(n, unit_params) == pytest.approx(
            an.momentum_cumulant_formula(n, unit_params))
    with pytest.raises(DomainError):
        an.stationary_momentum_cumulant(0, unit_params)


def test_cumulant_formula_scales_with_hbar_over_x0():
    p = PhysicalParams(mass=2.0, hbar=0.5, temperature=3.0, spreading_width=1.0, correlation_length=4.0)
    # (2n-1)!!/n * M X0^2 T / hbar^2 * (hbar/X0)^(2n)
    assert an.stationary_momentum_cumulant(2, p) == pytest.approx(-1.5 * 6.0 * (0.5 / 4.0) ** 2)
    assert an.maxwellian_comparator(p) == pytest.approx(6.0)


def test_equilibrium_characteristic_function(unit_params, gaussian_correlator):
    s = 0.01
    chi = an.equilibrium_characteristic_function(s, unit_params, gaussian_correlator)
    assert isinstance(chi, float)
    assert chi == pytest.approx(math.exp(-0.5 * s * s), rel=1e-6)
    # int_0^x (1 - e^{u^2/2}) / u du = -(Ei(z) - gamma_E - ln z) / 2 with z = x^2 / 2
    s = np.array([0.5, 1.0, 1.5, 2.0])
    z = 0.5 * s**2
    exact = np.exp(-(expi(z) - np.euler_gamma - np.log(z)))
    np.testing.assert_allclose(an.equilibrium_characteristic_function(s, unit_params, gaussian_correlator),
                               exact, rtol=1e-8)
    assert an.equilibrium_characteristic_function(1.0, unit_params, gaussian_correlator) == pytest.approx(0.5654, abs=1e-4)
    values = an.equilibrium_characteristic_function(np.array([-1.0, 0.0, 1.0, 3.0, 40.0]), unit_params,
                                                    gaussian_correlator)
    assert values[1] == 1.0
    assert values[0] == pytest.approx(values[2])
    assert 0.0 < values[3] < values[2] < 1.0
    assert values[4] == 0.0


def test_equilibrium_chi_of_quadratic_correlator_has_compact_support(unit_params):
    g = CorrelatorSpec("quadratic-truncated")
    values = an.equilibrium_characteristic_function(np.array([1.0, 1.9, 2.5, 3.0]), unit_params, g)
    # (1 - G)/G' = -x/2 inside |x| < 2, so ln chi = -x^2/2 there
    np.testing.assert_allclose(values[:2], np.exp(-0.5 * np.array([1.0, 1.9]) ** 2), rtol=1e-9)
    assert values[2] == 0.0 and values[3] == 0.0


def test_equilibrium_chi_decreases_for_levy(unit_params):
    g = CorrelatorSpec("levy", alpha=1.0, completion="exponential")
    values = an.equilibrium_characteristic_function(np.array([0.5, 1.0]), unit_params, g)
    assert np.all(np.diff(values) < 0)
