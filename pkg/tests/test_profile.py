import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from relaxshock.model import builtin_jin_xin_1d, burgers
from relaxshock.profile import (ProfileError, align_translation, derivative_consistency, fitted_decay_rate,
                                jin_xin_exact_profile, profile_residual, rankine_hugoniot_speed, solve_profile)


def test_exact_tanh_profile_s0(jx1):
    # eps = 0.1, s = 0: u(z) = -0.1 tanh(0.05 z)
    prof = solve_profile(jx1, 0.1, -0.1)
    assert prof.s == pytest.approx(0.0, abs=1e-15)
    z = prof.z
    ref = -0.1 * np.tanh(0.05 * z)
    h = align_translation(prof, z, ref)
    err = np.max(np.abs(prof.interp(z - h)[:, 0] - ref))
    assert err <= 1e-8
    assert profile_residual(prof, jx1) <= 1e-9
    assert prof.decay_rate == pytest.approx(0.1, rel=1e-10)


def test_closed_form_profile_is_solution(jx1):
    ex = jin_xin_exact_profile(1.0, 0.1, 0.2)
    assert profile_residual(ex, jx1) < 1e-15
    prof = solve_profile(jx1, 0.3, 0.1)
    assert prof.s == pytest.approx(0.2)
    h = align_translation(prof, ex.z, ex.values[:, 0])
    assert np.max(np.abs(prof.interp(ex.z - h) - ex.values)) < 1e-8


def test_profile_derivative_and_monotonicity(ref_profile, jx2):
    assert derivative_consistency(ref_profile) < 1e-6
    assert profile_residual(ref_profile, jx2) < 1e-9
    u = ref_profile.values[:, 0]
    assert np.all(np.diff(u) <= 1e-14)  # Lax shock of a convex flux is monotone
    assert fitted_decay_rate(ref_profile) == pytest.approx(ref_profile.decay_rate, rel=2e-2)


def test_transverse_component_integral_representation(ref_profile):
    # -s w' = f2(u) - w  =>  w(z) = (1/s) int_z^inf exp(-(zeta - z)/s) f2(u(zeta)) dzeta
    s = ref_profile.s
    f2 = lambda zz: 0.3 * ref_profile.interp(zz)[0]
    for z in (-20.0, -3.0, 0.0, 2.5, 15.0):
        val, _ = quad(lambda zeta: np.exp(-(zeta - z) / s) * f2(zeta), z, z + 40 * s, epsabs=1e-13, limit=200)
        w_ref = val / s
        assert ref_profile.interp(z)[2] == pytest.approx(w_ref, abs=1e-8)
    # and w differs from f2(u) inside the layer (s != 0)
    assert abs(ref_profile.interp(0.0)[2] - f2(0.0)) > 1e-3


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9))
def test_rankine_hugoniot_burgers(um, up):
    if abs(um - up) < 1e-6:
        return
    sysm = builtin_jin_xin_1d(1.0, burgers())
    s, lax = rankine_hugoniot_speed(sysm, um, up, return_lax=True)
    assert s == pytest.approx(0.5 * (um + up), abs=1e-12)
    assert lax == (um > up)


def test_profile_errors(jx1):
    with pytest.raises(ValueError):
        solve_profile(jx1, 0.2, 0.2)
    with pytest.raises(ProfileError):
        solve_profile(jx1, 0.1, 0.3)  # expansive: no Lax shock
    with pytest.raises(ProfileError):
        solve_profile(jx1, 0.3, 0.1, L=5.0)  # truncation too short


@settings(max_examples=8, deadline=None)
@given(st.floats(0.05, 0.3), st.floats(-0.4, 0.4))
def test_translation_invariance_of_alignment(eps, c):
    ex = jin_xin_exact_profile(1.0, eps, c)
    z = ex.z
    shifted = ex.interp(z - 3.0)[:, 0]
    assert align_translation(ex, z, shifted) == pytest.approx(3.0, abs=1e-6)
