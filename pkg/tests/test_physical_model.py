import math

import numpy as np
import pytest

from errors import DomainError, OutOfDomainError, SingularDerivativeError
from physical_model import (CorrelatorSpec, PhysicalParams, PotentialSpec, correlator_deriv, correlator_eval,
                            potential_deriv, potential_eval, toward_classical)


def test_params_reject_non_positive():
    with pytest.raises(DomainError):
        PhysicalParams(1.0, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        PhysicalParams(1.0, float("nan"), 1.0, 1.0, 1.0)


def test_beta_is_inverse_temperature():
    assert PhysicalParams(1.0, 1.0, 4.0, 1.0, 1.0).beta == pytest.approx(0.25)


@pytest.mark.parametrize("spec", [CorrelatorSpec("gaussian"), CorrelatorSpec("quadratic-truncated"),
                                  CorrelatorSpec("levy", alpha=1.5), CorrelatorSpec("levy", alpha=0.8, completion="exponential")])
def test_correlator_is_one_at_origin_even_and_bounded(spec):
    x = np.linspace(-5.0, 5.0, 101)
    g = correlator_eval(spec, x)
    assert correlator_eval(spec, 0.0) == pytest.approx(1.0)
    np.testing.assert_allclose(g, g[::-1])
    assert np.all(np.abs(g) <= 1.0)


def test_scalar_in_scalar_out(gaussian_correlator):
    assert isinstance(correlator_eval(gaussian_correlator, 0.3), float)
    assert correlator_eval(gaussian_correlator, np.array([0.3])).shape == (1,)


def test_quadratic_truncation():
    spec = CorrelatorSpec("quadratic-truncated")
    assert correlator_eval(spec, 1.0) == pytest.approx(0.5)
    assert correlator_eval(spec, 3.0) == pytest.approx(-1.0)
    assert correlator_deriv(spec, 1.0) == pytest.approx(-1.0)
    assert correlator_deriv(spec, 3.0) == 0.0


def test_levy_alpha_two_matches_quadratic_after_rescaling():
    levy = CorrelatorSpec("levy", alpha=2.0)
    quad = CorrelatorSpec("quadratic-truncated")
    x = np.linspace(-3.0, 3.0, 61)
    u = math.sqrt(2.0) * x
    # same function over the whole line, clamp included
    np.testing.assert_allclose(correlator_eval(levy, x), correlator_eval(quad, u), atol=1e-12)
    np.testing.assert_allclose(correlator_deriv(levy, x), math.sqrt(2.0) * correlator_deriv(quad, u), atol=1e-12)
    smooth = CorrelatorSpec("levy", alpha=2.0, completion="exponential")
    np.testing.assert_allclose(correlator_eval(smooth, x), correlator_eval(CorrelatorSpec("gaussian"), u), atol=1e-12)
    h = 1e-3
    curvature = (correlator_eval(levy, h) - 2.0 + correlator_eval(levy, -h)) / h**2
    assert curvature == pytest.approx(-2.0)
    assert (correlator_eval(quad, h) - 2.0 + correlator_eval(quad, -h)) / h**2 == pytest.approx(-1.0)


def test_derivative_matches_finite_difference():
    for spec in (CorrelatorSpec("gaussian"), CorrelatorSpec("levy", alpha=1.5, completion="exponential")):
        x = np.array([-1.3, -0.4, 0.2, 0.9])
        h = 1e-6
        fd = (correlator_eval(spec, x + h) - correlator_eval(spec, x - h)) / (2 * h)
        np.testing.assert_allclose(correlator_deriv(spec, x), fd, rtol=1e-6)


def test_levy_derivative_singular_at_origin():
    with pytest.raises(SingularDerivativeError):
        correlator_deriv(CorrelatorSpec("levy", alpha=1.0), 0.0)
    assert correlator_deriv(CorrelatorSpec("levy", alpha=1.5), 0.0) == 0.0


def test_tabulated_correlator():
    x = np.linspace(0.0, 4.0, 41)
    spec = CorrelatorSpec("tabulated", table_x=tuple(x), table_g=tuple(np.exp(-0.5 * x**2)))
    np.testing.assert_allclose(correlator_eval(spec, [0.5, -0.5]), np.exp(-0.125), rtol=1e-4)
    with pytest.raises(OutOfDomainError):
        correlator_eval(spec, 5.0)
    assert spec.domain == pytest.approx(4.0)


def test_tabulated_correlator_validation():
    with pytest.raises(DomainError):
        CorrelatorSpec("tabulated", table_x=(0.0, 1.0, 2.0, 3.0), table_g=(0.9, 0.5, 0.2, 0.1))
    with pytest.raises(DomainError):
        CorrelatorSpec("tabulated", table_x=(0.5, 1.0, 2.0, 3.0), table_g=(1.0, 0.5, 0.2, 0.1))


def test_unknown_family_and_bad_alpha():
    with pytest.raises(DomainError):
        CorrelatorSpec("lorentzian")
    with pytest.raises(DomainError):
        CorrelatorSpec("levy", alpha=2.5)


def test_correlator_rejects_non_finite(gaussian_correlator):
    with pytest.raises(DomainError):
        correlator_eval(gaussian_correlator, np.inf)


@pytest.mark.parametrize("spec", [PotentialSpec("linear", slope=0.7), PotentialSpec("harmonic", stiffness=2.0),
                                  PotentialSpec("parabolic-barrier", stiffness=0.5),
                                  PotentialSpec("double-well", a=1.5, b=0.3)])
def test_potential_derivative_consistent(spec):
    q = np.linspace(-2.0, 2.0, 9)
    h = 1e-6
    fd = (potential_eval(spec, q + h) - potential_eval(spec, q - h)) / (2 * h)
    np.testing.assert_allclose(potential_deriv(spec, q), fd, rtol=1e-6, atol=1e-8)


def test_double_well_minima():
    spec = PotentialSpec("double-well", a=2.0, b=1.0)
    assert potential_eval(spec, 2.0) == pytest.approx(0.0)
    assert potential_eval(spec, 0.0) == pytest.approx(4.0)


def test_tabulated_potential_domain():
    q = np.linspace(-3.0, 3.0, 31)
    spec = PotentialSpec("tabulated", table_q=tuple(q), table_u=tuple(0.5 * q**2))
    assert potential_deriv(spec, 1.0) == pytest.approx(1.0, rel=1e-3)
    with pytest.raises(OutOfDomainError):
        potential_eval(spec, 4.0)


def test_potential_validation():
    with pytest.raises(DomainError):
        PotentialSpec("harmonic")
    assert PotentialSpec().is_free


def test_toward_classical_keeps_friction_fixed(unit_params):
    scaled = toward_classical(unit_params, 0.1)
    assert scaled.hbar == pytest.approx(0.1)
    assert scaled.spreading_width * scaled.hbar == pytest.approx(unit_params.spreading_width * unit_params.hbar)
    assert scaled.correlation_length == unit_params.correlation_length
    with pytest.raises(DomainError):
        toward_classical(unit_params, 0.0)
