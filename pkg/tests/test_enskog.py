import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relaxshock.enskog import (definiteness_check, dispersion_fit, enskog_closed_form, enskog_report,
                               equilibrium_flux_derivative, viscosity_blocks)
from relaxshock.model import builtin_jin_xin_1d, builtin_jin_xin_2d, burgers, linear_flux


def slow_root_1d(a, fp, xi):
    # slow root of lambda^2 + lambda + i xi f' + a^2 xi^2 = 0
    disc = np.sqrt(1 - 4 * (1j * xi * fp + a * a * xi * xi) + 0j)
    return (-1 + disc) / 2


def test_oracle_1d_matches_root_expansion(jx1):
    h = 1e-3
    lp, lm = slow_root_1d(1.0, 0.5, h), slow_root_1d(1.0, 0.5, -h)
    a_oracle = -((lp - lm) / (2 * h)).imag
    b_oracle = -((lp + lm) / 2 / h ** 2).real
    assert a_oracle == pytest.approx(0.5, abs=1e-6)
    assert b_oracle == pytest.approx(0.75, abs=1e-5)
    fit = dispersion_fit(jx1, jx1.equilibrium_state(0.5))
    assert fit.a_fit[0] == pytest.approx(a_oracle, abs=1e-6)
    assert fit.B_fit[0, 0] == pytest.approx(b_oracle, abs=1e-4)


def test_closed_form_discrepancy_flagged(jx1):
    rep = enskog_report(jx1, 0.5)
    assert rep.a_star[0] == pytest.approx(0.5, abs=1e-12)
    assert rep.b_star_formula[0, 0] == pytest.approx(1.25, abs=1e-12)
    assert rep.discrepancy_flag
    # downstream uses the fit
    assert rep.b_star[0, 0] == pytest.approx(0.75, abs=1e-4)
    d = rep.to_dict()
    assert {"a_fit", "B_fit", "b_star_formula", "discrepancy_flag"} <= set(d)


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.8, 0.8))
def test_jin_xin_2d_diffusion_tensor(u):
    sysm = builtin_jin_xin_2d(1.0, 1.0, burgers(), linear_flux(0.3))
    fit = dispersion_fit(sysm, sysm.equilibrium_state(u))
    fp = np.array([u, 0.3])
    oracle = np.eye(2) - np.outer(fp, fp)
    assert np.allclose(fit.a_fit, fp, atol=1e-6)
    assert np.allclose(fit.B_fit, oracle, atol=1e-4)
    assert np.allclose(fit.B_fit, fit.B_fit.T)
    assert definiteness_check(fit.B_fit)[0]


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(1.0, 3.0))
def test_subcharacteristic_gives_positive_diffusion_1d(u, a):
    sysm = builtin_jin_xin_1d(a, burgers())
    fit = dispersion_fit(sysm, sysm.equilibrium_state(u))
    assert fit.B_fit[0, 0] == pytest.approx(a * a - u * u, rel=1e-4)
    assert fit.B_fit[0, 0] > 0


def test_residual_scales_cubically(jx1):
    U = jx1.equilibrium_state(0.3)
    r1 = dispersion_fit(jx1, U, radii=[4e-3 * 0.5 ** k for k in range(5)]).residual
    r2 = dispersion_fit(jx1, U, radii=[2e-3 * 0.5 ** k for k in range(5)]).residual
    assert 6.0 < r1 / r2 < 10.0


def test_viscosity_blocks_roundtrip():
    B = np.array([[0.75, -0.15], [-0.15, 0.91]])
    vb = viscosity_blocks(B)
    assert vb.convention == "symmetric"
    assert np.allclose(vb.reconstruct(), B)
    assert vb.b11 == pytest.approx(0.75)
    assert np.allclose(vb.Bbar, B[1:, 1:] / 0.75 - np.outer(B[1:, 0], B[1:, 0]) / 0.75 ** 2)
    with pytest.raises(ValueError):
        viscosity_blocks([[0.0, 1.0], [1.0, 1.0]])
    ok, lam = definiteness_check([[1.0, 2.0], [2.0, 1.0]])
    assert not ok and lam == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        definiteness_check([[1.0, 2.0], [0.0, 1.0]])


def test_equilibrium_speed(jx2):
    assert equilibrium_flux_derivative(jx2, 0.4, 1) == pytest.approx(0.4, abs=1e-9)
    assert equilibrium_flux_derivative(jx2, 0.4, 2) == pytest.approx(0.3, abs=1e-9)
    cf = enskog_closed_form(jx2, 0.4)
    assert np.allclose(cf.a_star, [0.4, 0.3])
