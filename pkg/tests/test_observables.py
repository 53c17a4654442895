import math

import numpy as np
import pytest

import analytic_solutions as an
from density_grid import DensityMatrixGrid, GridSpec, gaussian_mixed_state
from errors import DomainError, UnnormalizedStateError
from observables import (CumulantSeries, MomentumMarginal, coordinate_cumulants, coordinate_tail_index, cumulant_series,
                         fit_diffusion_exponent, fit_power_law, momentum_cumulants, momentum_marginal,
                         stable_tail_index, tail_exceedance, wigner_transform)


@pytest.fixture
def fine_grid():
    return GridSpec(64, 256, 20.0, 20.0)


def test_wigner_of_gaussian(small_grid, unit_params):
    rho = gaussian_mixed_state(small_grid, 1.0, 0.5, 1.0, 1.0, p0=0.5)
    w = wigner_transform(rho, unit_params)
    rr, pp = np.meshgrid(w.r, w.p, indexing="ij")
    exact = np.exp(-0.5 * (rr - 0.5) ** 2 - 0.5 * (pp - 0.5) ** 2) / (2.0 * np.pi)
    np.testing.assert_allclose(w.values, exact, atol=1e-10)
    assert w.n_p == 64
    assert w.p_extent == pytest.approx(2.0 * np.pi * 64 / 20.0)
    np.testing.assert_allclose(w.position_marginal(), np.real(rho.diagonal()), atol=1e-10)


def test_wigner_parseval(small_grid, unit_params):
    rho = gaussian_mixed_state(small_grid, 1.0, 0.0, 1.2, 0.9)
    w = wigner_transform(rho, unit_params)
    assert 2.0 * np.pi * unit_params.hbar * w.l2_norm() ** 2 == pytest.approx(rho.l2_norm() ** 2, rel=1e-10)


def test_wigner_frame_stride(small_grid, unit_params):
    w = wigner_transform(gaussian_mixed_state(small_grid, 1.0, 0.0, 1.0, 1.0), unit_params)
    frame = w.to_frame(stride=4)
    assert list(frame.columns) == ["r", "p", "W"]
    assert len(frame) == 16 * 16


def test_momentum_marginal_moments(small_grid, unit_params):
    rho = gaussian_mixed_state(small_grid, 1.0, 0.0, 1.0, 1.3, p0=-0.4)
    m = momentum_marginal(rho, unit_params)
    assert m.total() == pytest.approx(1.0, abs=1e-10)
    mean = np.sum(m.momenta * m.density) * m.dp
    var = np.sum((m.momenta - mean) ** 2 * m.density) * m.dp
    assert mean == pytest.approx(-0.4, abs=1e-8)
    assert var == pytest.approx(1.69, rel=1e-6)
    np.testing.assert_allclose(m.characteristic_function(np.array([0.0, 0.5]), 1.0),
                               np.exp(-0.5 * 1.69 * np.array([0.0, 0.25]) - 0.4j * np.array([0.0, 0.5])),
                               atol=1e-10)


def test_momentum_cumulants_of_gaussian(small_grid, unit_params):
    rho = gaussian_mixed_state(small_grid, 1.0, 0.0, 1.0, 1.3, p0=0.7)
    k = momentum_cumulants(rho, unit_params, max_order=4)
    assert k[1] == pytest.approx(0.7, rel=1e-10)
    assert k[2] == pytest.approx(1.69, rel=1e-10)
    assert abs(k[3]) < 1e-8
    assert abs(k[4]) < 1e-8


def test_decohered_momentum_cumulants(fine_grid, unit_params, gaussian_correlator):
    rho0 = gaussian_mixed_state(fine_grid, 1.0, 0.0, 1.0, 0.8)
    rho = an.decoherence_limit(rho0, unit_params, gaussian_correlator, 0.5)
    k = momentum_cumulants(rho, unit_params, max_order=6)
    # ln chi = -0.32 s^2 + 0.5 (exp(-s^2/2) - 1)
    assert k[2] == pytest.approx(0.64 + 0.5, rel=1e-6)
    assert k[4] == pytest.approx(1.5, rel=1e-5)
    assert k[6] == pytest.approx(7.5, rel=1e-3)


def test_cumulant_guards(small_grid, unit_params):
    rho = gaussian_mixed_state(small_grid, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(UnnormalizedStateError):
        momentum_cumulants(rho.with_values(2.0 * rho.values), unit_params)
    with pytest.raises(UnnormalizedStateError):
        coordinate_cumulants(rho.with_values(2.0 * rho.values))
    with pytest.raises(DomainError):
        momentum_cumulants(rho, unit_params, max_order=9)


def test_coordinate_cumulants(small_grid):
    rho = gaussian_mixed_state(small_grid, 1.0, 1.5, 1.1, 1.0)
    k = coordinate_cumulants(rho, max_order=4)
    assert k[1] == pytest.approx(1.5, rel=1e-10)
    assert k[2] == pytest.approx(1.21, rel=1e-10)
    assert abs(k[3]) < 1e-8
    assert abs(k[4]) < 1e-8


def test_cumulant_series_frame(fine_grid, unit_params, gaussian_correlator):
    rho0 = gaussian_mixed_state(fine_grid, 1.0, 0.0, 1.0, 0.8)
    snaps = [an.decoherence_limit(rho0, unit_params, gaussian_correlator, t) for t in (0.0, 0.5, 1.0)]
    series = cumulant_series(snaps, unit_params)
    frame = series.to_frame()
    assert list(frame.columns) == ["t", "P2", "P4", "Q1", "Q2"]
    np.testing.assert_allclose(series.column("P", 2), 0.64 + np.array([0.0, 0.5, 1.0]), rtol=1e-6)
    np.testing.assert_allclose(series.column("Q", 2), 1.0, rtol=1e-10)
    with pytest.raises(DomainError):
        cumulant_series([], unit_params)


def test_series_length_checked():
    with pytest.raises(DomainError):
        CumulantSeries(np.arange(3.0), {("Q", 2): np.arange(4.0)})


@pytest.mark.parametrize("nu", [1.0, 3.0])
def test_power_law_fit_recovers_planted_exponent(nu):
    t = np.linspace(1.0, 50.0, 100)
    fit = fit_power_law(t, 0.3 * t**nu, (5.0, 50.0))
    assert abs(fit.exponent - nu) < 0.02
    assert fit.prefactor == pytest.approx(0.3, rel=1e-8)
    assert fit.r_squared == pytest.approx(1.0)


def test_linear_slope_reported():
    t = np.linspace(0.0, 40.0, 81)
    fit = fit_power_law(t, 4.0 * t + 1e-3, (10.0, 40.0))
    assert fit.slope == pytest.approx(4.0, rel=1e-9)
    row = fit.as_row()
    assert row["t_start"] == 10.0 and row["n_points"] == 61


def test_fit_window_guards():
    t = np.linspace(1.0, 10.0, 30)
    with pytest.raises(DomainError):
        fit_power_law(t, t, (0.5, 5.0))
    with pytest.raises(DomainError):
        fit_power_law(t, t, (2.0, 2.5))
    with pytest.raises(DomainError):
        fit_power_law(t, -t, (2.0, 9.0))


def test_fit_diffusion_exponent_records_fit():
    t = np.linspace(1.0, 20.0, 40)
    series = CumulantSeries(t, {("Q", 2): 2.0 * t})
    fit = fit_diffusion_exponent(series, (2.0, 20.0))
    assert series.fits[("Q", 2)] is fit
    assert fit.exponent == pytest.approx(1.0, abs=1e-10)


def test_stable_index_of_gaussian_law(unit_params):
    p = np.linspace(-20.0, 20.0, 2001)
    density = np.exp(-0.5 * p**2) / math.sqrt(2.0 * math.pi)
    marginal = MomentumMarginal(p, density)
    fit = stable_tail_index(marginal, unit_params)
    assert fit.alpha == pytest.approx(2.0, abs=1e-4)
    # -ln chi = |c s|^2 with c = sigma / sqrt(2)
    assert fit.scale == pytest.approx(math.sqrt(0.5), rel=1e-3)
    windowed = stable_tail_index(marginal, unit_params, window=(0.5, 2.0))
    assert windowed.alpha == pytest.approx(2.0, abs=1e-4)
    with pytest.raises(UnnormalizedStateError):
        stable_tail_index(MomentumMarginal(p, 2.0 * density), unit_params)
    with pytest.raises(DomainError):
        stable_tail_index(marginal, unit_params, window=(2.0, 0.5))


def test_coordinate_tail_index_separates_gaussian_from_heavy_tail():
    grid = GridSpec(256, 4, 40.0, 4.0)
    fit = coordinate_tail_index(gaussian_mixed_state(grid, 1.0, 0.0, 2.0, 1.0))
    assert fit.alpha == pytest.approx(2.0, abs=1e-4)
    assert fit.scale == pytest.approx(math.sqrt(2.0), rel=1e-3)

    wide = GridSpec(8192, 4, 2000.0, 4.0)
    cauchy = 2.0 / (math.pi * (wide.r**2 + 4.0))
    values = np.zeros((wide.nr, wide.ns), dtype=complex)
    values[:, wide.s0_index] = cauchy / (cauchy.sum() * wide.dr)
    heavy = coordinate_tail_index(DensityMatrixGrid(values, wide.r_extent, wide.s_extent), window=(0.1, 1.0))
    # chi(k) = exp(-2 |k|)
    assert heavy.alpha == pytest.approx(1.0, abs=0.02)
    assert heavy.scale == pytest.approx(2.0, rel=0.02)
    with pytest.raises(UnnormalizedStateError):
        coordinate_tail_index(DensityMatrixGrid(2.0 * values, wide.r_extent, wide.s_extent))


def test_tail_exceedance_of_gaussian():
    grid = GridSpec(8192, 4, 40.0, 4.0)
    rho = gaussian_mixed_state(grid, 1.0, 0.0, 2.0, 1.0)
    table = tail_exceedance(rho, quantiles=(1e-2, 1e-3))
    assert list(table.columns) == ["quantile", "threshold", "empirical", "gaussian", "ratio"]
    np.testing.assert_allclose(table["ratio"], 1.0, rtol=0.05)
    assert table["threshold"].iloc[0] == pytest.approx(2.0 * 2.5758, rel=1e-3)
