import csv
import math

import numpy as np
import pytest

from lbelab.fokker_planck import (PhaseSpaceField, PhaseSpaceGrid, StabilityError, gaussian_field,
                                  gaussian_position_field, high_friction_compare, kramers_solve, maxwell_profile,
                                  quantum_kramers_solve, smoluchowski_solve, smoluchowski_stable_dt, stable_dt)
from lbelab.physics import (CrossSectionModel, PhysicalParams, einstein_coefficient, friction_coefficient,
                            position_diffusion_coefficient)


@pytest.fixture
def params():
    return PhysicalParams()


@pytest.fixture
def eta(params):
    return friction_coefficient(params, CrossSectionModel.constant())


def _uniform_maxwell(grid, params, shift=0.0):
    f = np.outer(np.ones(grid.n_x), maxwell_profile(grid, params, shift)) / (grid.x_max - grid.x_min)
    return PhaseSpaceField(grid, f)


def test_grid_invariants(params):
    with pytest.raises(ValueError):
        PhaseSpaceGrid(n_x=4)
    with pytest.raises(ValueError):
        PhaseSpaceGrid(x_min=1.0, x_max=0.0)
    with pytest.raises(ValueError, match="p_max"):
        PhaseSpaceGrid(p_max=4.0).check_momentum_range(params)
    g = PhaseSpaceGrid(-1.0, 1.0, 8, 6.0, 8)
    assert g.dx == pytest.approx(0.25)
    assert g.p[0] == -6.0 and g.p[-1] == 6.0


def test_maxwell_stationary_short(params, eta):
    grid = PhaseSpaceGrid(-5.0, 5.0, 16, 6.0, 48)
    f0 = _uniform_maxwell(grid, params)
    res = kramers_solve(f0, eta, 2.0 / eta, stable_dt(grid, eta, params), params)
    assert np.abs(res.field.values - f0.values).max() < 1e-12


@pytest.mark.parametrize("transport", ["upwind", "limited", "spectral"])
def test_normalisation_and_positivity(params, eta, transport):
    grid = PhaseSpaceGrid(-10.0, 10.0, 32, 6.0, 48)
    f0 = gaussian_field(grid, params, 0.0, 2.0, 1.5, 0.5)
    t_end = 10.0
    res = kramers_solve(f0, eta, t_end, stable_dt(grid, eta, params), params, transport)
    drift = np.abs(res.moments.array("norm") - 1.0).max()
    assert drift < 1e-8 * t_end
    if transport != "spectral":
        assert res.field.values.min() >= 0.0


def _homogeneous_moments(n_p, params, eta, t_end):
    grid = PhaseSpaceGrid(0.0, 1.0, 8, 10.0, n_p)
    f0 = _uniform_maxwell(grid, params, shift=2.0)
    res = kramers_solve(f0, eta, t_end, stable_dt(grid, eta, params), params, "spectral")
    t = res.moments.array("t")
    p0 = res.moments.mean_p[0]
    v0 = res.moments.var_p[0]
    mean_err = np.abs(res.moments.array("mean_p") - p0 * np.exp(-eta * t)).max() / abs(p0)
    var_exact = params.thermal_momentum_sq + (v0 - params.thermal_momentum_sq) * np.exp(-2 * eta * t)
    var_err = np.abs(res.moments.array("var_p") - var_exact).max() / params.thermal_momentum_sq
    return mean_err, var_err


def test_moments_follow_exact_odes(params, eta):
    mean_err, var_err = _homogeneous_moments(256, params, eta, 1.0 / eta)
    assert mean_err < 5e-3
    assert var_err < 5e-3


def test_moment_errors_second_order_in_dp(params, eta):
    errs = [_homogeneous_moments(n, params, eta, 0.5 / eta)[0] for n in (64, 128, 256)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8), (errs, orders)


def test_refuses_unstable_dt(params, eta):
    grid = PhaseSpaceGrid(-5.0, 5.0, 16, 6.0, 48)
    f0 = _uniform_maxwell(grid, params)
    limit = stable_dt(grid, eta, params)
    with pytest.raises(StabilityError, match="dt <="):
        kramers_solve(f0, eta, 1.0, 2 * limit, params)
    sigma0 = gaussian_position_field(-10, 10, 64)
    with pytest.raises(StabilityError):
        smoluchowski_solve(sigma0, eta, 1.0, 1.0, params)


def test_unknown_transport(params, eta):
    grid = PhaseSpaceGrid(-5.0, 5.0, 16, 6.0, 48)
    with pytest.raises(ValueError):
        kramers_solve(_uniform_maxwell(grid, params), eta, 1.0, 0.01, params, "central")


def test_quantum_solver_reduces_to_classical_bitwise(params, eta):
    grid = PhaseSpaceGrid(-10.0, 10.0, 32, 6.0, 48)
    f0 = gaussian_field(grid, params, 1.0, 2.0, 0.5)
    classical = params.replace(hbar=0.0)
    dt = stable_dt(grid, eta, params, position_diffusion_coefficient(eta, params))
    for transport in ("upwind", "limited", "spectral"):
        a = kramers_solve(f0, eta, 5.0, dt, classical, transport)
        b = quantum_kramers_solve(f0, eta, 5.0, dt, classical, transport)
        assert np.array_equal(a.field.values, b.field.values)


def test_quantum_changes_only_position_marginal(params, eta):
    grid = PhaseSpaceGrid(-20.0, 20.0, 64, 6.0, 48)
    f0 = gaussian_field(grid, params, 0.0, 2.0, 1.0)
    dt = stable_dt(grid, eta, params, position_diffusion_coefficient(eta, params))
    q = quantum_kramers_solve(f0, eta, 5.0, dt, params, "spectral")
    c = kramers_solve(f0, eta, 5.0, dt, params.replace(hbar=0.0), "spectral")
    np.testing.assert_allclose(q.field.marginal_p(), c.field.marginal_p(), atol=1e-12)
    assert q.moments.var_x[-1] > c.moments.var_x[-1]


def test_excess_position_spread(params, eta):
    grid = PhaseSpaceGrid(-40.0, 40.0, 128, 6.0, 48)
    f0 = gaussian_field(grid, params, 0.0, 1.0)
    d_xx = position_diffusion_coefficient(eta, params)
    dt = stable_dt(grid, eta, params, d_xx)
    q = quantum_kramers_solve(f0, eta, 3.0, dt, params, "spectral")
    c = kramers_solve(f0, eta, 3.0, dt, params.replace(hbar=0.0), "spectral")
    excess = np.gradient(q.moments.array("var_x") - c.moments.array("var_x"), q.moments.array("t"))
    np.testing.assert_allclose(excess, 2 * d_xx, rtol=0.01)


def test_smoluchowski_variance_growth(params, eta):
    coef = einstein_coefficient(eta, params) + position_diffusion_coefficient(eta, params)
    sigma0 = gaussian_position_field(-60.0, 60.0, 512, 0.0, 1.0)
    t_end = 3.0
    res = smoluchowski_solve(sigma0, eta, t_end, smoluchowski_stable_dt(sigma0.dx, coef), params)
    np.testing.assert_allclose(res.variance, sigma0.variance() + 2 * coef * res.t, rtol=5e-3)
    assert res.field.values.min() >= 0.0
    assert abs(res.norm[-1] - 1.0) < 1e-12
    assert res.coefficient == pytest.approx(coef, rel=1e-15)
    classical = smoluchowski_solve(sigma0, eta, t_end, res.dt, params.replace(hbar=0.0))
    assert classical.coefficient == einstein_coefficient(eta, params)


def test_smoluchowski_requires_friction(params):
    with pytest.raises(ValueError):
        smoluchowski_solve(gaussian_position_field(-5, 5, 32), 0.0, 1.0, 0.01, params)


def test_high_friction_rejects_non_separable(params):
    grid = PhaseSpaceGrid(-10.0, 10.0, 32, 6.0, 32)
    f0 = gaussian_field(grid, params, 0.0, 1.0, p0=1.0)
    with pytest.raises(ValueError, match="Maxwellian"):
        high_friction_compare(f0, [1.0, 2.0], 1.0, params)


def test_high_friction_classical_trend():
    params = PhysicalParams(hbar=0.0)
    grid = PhaseSpaceGrid(-15.0, 15.0, 64, 6.0, 32)
    f0 = gaussian_field(grid, params, 0.0, 1.0)
    rep = high_friction_compare(f0, [1.0, 2.0, 4.0], 3.0, params)
    assert rep.monotone
    assert -2.0 <= rep.slope <= -0.7


def test_csv_exports(tmp_path, params, eta):
    grid = PhaseSpaceGrid(-5.0, 5.0, 8, 6.0, 16)
    res = kramers_solve(_uniform_maxwell(grid, params), eta, 1.0, stable_dt(grid, eta, params), params)
    res.moments.to_csv(tmp_path / "m.csv")
    res.field.to_csv(tmp_path / "f.csv")
    with open(tmp_path / "m.csv") as fh:
        assert next(csv.reader(fh)) == ["t", "mean_x", "mean_p", "var_x", "var_p", "cov_xp", "norm"]
    with open(tmp_path / "f.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "p", "f"]
    assert len(rows) == 1 + 8 * 16
