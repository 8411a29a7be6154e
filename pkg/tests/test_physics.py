import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from lbelab.physics import (CrossSectionModel, PhysicalParams, QuadratureError, correction_factor,
                            detailed_balance_residual, differential_cross_section, einstein_coefficient,
                            energy_transfer, friction_coefficient, friction_coefficient_closed_form,
                            log_structure_factor, position_diffusion_coefficient, smoluchowski_coefficient,
                            structure_factor, structure_factor_brownian, structure_factor_mb)

# reference values computed with mpmath at 30 digits
ETA_DEFAULT = 0.0587159599645335
ETA_ALPHA_001 = 2.56991236666e-4
D_XX_DEFAULT = 3.66974749778e-3
ETA_GAUSSIAN_W05 = 0.0107845640751183973


@pytest.fixture
def params():
    return PhysicalParams()


def test_params_validation():
    with pytest.raises(ValueError, match="beta"):
        PhysicalParams(beta=0.0)
    with pytest.raises(ValueError, match="hbar"):
        PhysicalParams(hbar=-1.0)
    p = PhysicalParams(gas_mass=0.2)
    assert p.alpha == pytest.approx(0.2)
    assert p.replace(hbar=0.0).hbar == 0.0
    with pytest.raises(ValueError):
        p.replace(hbar=0.0).require_quantum("x")


def test_structure_factor_reference_values():
    heavy_gas = PhysicalParams(gas_mass=1.0)
    assert structure_factor(1.0, 0.0, heavy_gas) == pytest.approx(0.352065326764299, rel=1e-13)
    assert structure_factor(1.0, 0.0, PhysicalParams()) == pytest.approx(0.0361444785336362540, rel=1e-13)


def test_structure_factor_singular_at_zero_transfer(params):
    with pytest.raises(ValueError, match="singular"):
        log_structure_factor(0.0, 0.1, params)
    with pytest.raises(ValueError):
        log_structure_factor(1.0, 0.0, params, form="other")


def test_mb_exponent_matches_textbook_form(params):
    # exp(-(beta/8m)(2mE + q^2)^2/q^2) times sqrt(beta m/2pi)/q
    q = np.array([0.3, 1.0, 2.5])
    E = np.array([-0.2, 0.4, 1.1])
    b, m = params.beta, params.gas_mass
    direct = math.sqrt(b * m / (2 * math.pi)) / q * np.exp(-(b / (8 * m)) * (2 * m * E + q**2) ** 2 / q**2)
    np.testing.assert_allclose(structure_factor(q, E, params), direct, rtol=1e-13)


def test_detailed_balance_log_spaced_grid(params):
    q = np.logspace(-3, 1, 10)
    E = np.logspace(-4, 1, 10)
    Q, EE = np.meshgrid(q, E)
    for form in ("mb", "brownian"):
        for sign in (1.0, -1.0):
            res = detailed_balance_residual(Q, sign * EE, params, form, relative=True)
            assert np.abs(res).max() < 1e-10


@settings(max_examples=200, deadline=None)
@given(q=st.floats(1e-4, 50.0), E=st.floats(-200.0, 200.0), beta=st.floats(0.05, 20.0),
       m=st.floats(0.01, 5.0), form=st.sampled_from(["mb", "brownian"]))
def test_detailed_balance_property(q, E, beta, m, form):
    p = PhysicalParams(gas_mass=m, beta=beta)
    # where S underflows the relative residual is meaningless
    assume(float(log_structure_factor(q, E, p, form)) > -700.0)
    assert abs(float(detailed_balance_residual(q, E, p, form, relative=True))) < 1e-10


@settings(max_examples=100, deadline=None)
@given(q=st.lists(st.floats(-3, 3), min_size=3, max_size=3), p=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       seed=st.integers(0, 2**32 - 1))
def test_structure_factor_rotation_invariant(q, p, seed):
    q = np.array(q)
    p = np.array(p)
    if np.linalg.norm(q) < 1e-3:
        return
    R = Rotation.random(random_state=seed).as_matrix()
    params = PhysicalParams()
    for fn in (structure_factor_mb, structure_factor_brownian):
        a = fn(q, p, params)
        b = fn(R @ q, R @ p, params)
        assert b == pytest.approx(a, rel=1e-10, abs=1e-300)


def test_brownian_form_is_small_mass_ratio_limit():
    q = np.array([0.0, 0.0, 0.02])
    p = np.array([0.0, 0.3, 0.5])
    ratios = []
    for m in (1e-2, 1e-3, 1e-4):
        par = PhysicalParams(gas_mass=m)
        ratios.append(abs(structure_factor_mb(q * math.sqrt(m), p, par)
                          / structure_factor_brownian(q * math.sqrt(m), p, par) - 1))
    assert ratios[0] > ratios[1] > ratios[2]


def test_energy_transfer():
    p = PhysicalParams(test_mass=2.0)
    assert energy_transfer([0, 0, 1.0], [0, 0, 3.0], p) == pytest.approx((0.5 + 3.0) / 2.0)


def test_differential_cross_section(params):
    xs = CrossSectionModel.constant(2.0)
    p = np.array([0.0, 0.0, 1.0])
    q = np.array([0.5, 0.0, 0.0])
    expect = math.sqrt(1.25) * 2.0 * structure_factor_mb(q, p, params)
    assert differential_cross_section(p, q, params, xs) == pytest.approx(expect)
    with pytest.raises(ValueError):
        differential_cross_section([0, 0, 0], q, params, xs)


def test_friction_quadrature_matches_closed_form(params):
    xs = CrossSectionModel.constant()
    eta = friction_coefficient(params, xs)
    assert eta == pytest.approx(friction_coefficient_closed_form(params, 1.0), rel=1e-8)
    assert eta == pytest.approx(ETA_DEFAULT, rel=1e-10)
    light = PhysicalParams(gas_mass=0.01)
    assert friction_coefficient(light, xs) == pytest.approx(ETA_ALPHA_001, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(M=st.floats(0.5, 5.0), m=st.floats(0.01, 2.0), beta=st.floats(0.2, 5.0), n=st.floats(0.1, 10.0),
       s0=st.floats(0.1, 10.0))
def test_friction_closed_form_property(M, m, beta, n, s0):
    p = PhysicalParams(M, m, beta, n, 1.0)
    eta = friction_coefficient(p, CrossSectionModel.constant(s0))
    assert eta == pytest.approx(friction_coefficient_closed_form(p, s0), rel=1e-8)


def test_friction_gaussian_cross_section(params):
    eta = friction_coefficient(params, CrossSectionModel.gaussian(1.0, 0.5))
    assert eta == pytest.approx(ETA_GAUSSIAN_W05, rel=1e-9)


def test_friction_tabulated_constant_table(params):
    xs = CrossSectionModel.tabulated([0.0, 1.0, 2.0, 10.0], [1.0, 1.0, 1.0, 1.0])
    assert friction_coefficient(params, xs) == pytest.approx(ETA_DEFAULT, rel=1e-9)


def test_friction_null_cross_section(params):
    assert friction_coefficient(params, CrossSectionModel.constant(0.0)) == 0.0


def test_quadrature_error_reports_tolerance(params, monkeypatch):
    from lbelab import physics

    monkeypatch.setattr(physics.integrate, "quad", lambda *a, **k: (1.0, 1e-3))
    with pytest.raises(QuadratureError, match="requested 1.0e-10"):
        friction_coefficient(params, CrossSectionModel.constant())


def test_cross_section_validation():
    with pytest.raises(ValueError):
        CrossSectionModel.gaussian(1.0, 0.0)
    with pytest.raises(ValueError):
        CrossSectionModel.tabulated([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        CrossSectionModel("cubic")


def test_coefficients(params):
    eta = friction_coefficient(params, CrossSectionModel.constant())
    assert position_diffusion_coefficient(eta, params) == pytest.approx(D_XX_DEFAULT, rel=1e-10)
    ratio = smoluchowski_coefficient(eta, params) / einstein_coefficient(eta, params)
    assert abs(ratio - correction_factor(eta, params)) < 1e-12
    classical = params.replace(hbar=0.0)
    assert correction_factor(eta, classical) == 1.0
    assert smoluchowski_coefficient(eta, classical) == einstein_coefficient(eta, classical)
    with pytest.raises(ValueError):
        position_diffusion_coefficient(-1.0, params)
