import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad, quad

from relaxshock.enskog import viscosity_blocks
from relaxshock.front import (FrontField, GreenKernelParams, KernelError, decay_report, delta_initial,
                              derivative_norm, evolve_delta, gaussian_field, leading_green_kernels, mollifier_error,
                              mollify, periodic_axes, power_law_fit)

AX = periodic_axes([1024], [1024.0])


def field(alpha=0.3, beta=0.91):
    return gaussian_field(AX, [512.0], 3.0, 1.0, [alpha], [[beta]])


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_semigroup(t1, t2):
    f = field()
    a = evolve_delta(evolve_delta(f, t1), t1 + t2)
    b = evolve_delta(f, t1 + t2)
    assert np.allclose(a.values, b.values, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 100.0), st.floats(0.01, 100.0))
def test_mass_conserved_and_norm_nonincreasing(t1, dt):
    f = field()
    a, b = evolve_delta(f, t1), evolve_delta(f, t1 + dt)
    assert a.mass() == pytest.approx(1.0, abs=1e-12) and b.mass() == pytest.approx(1.0, abs=1e-12)
    assert b.l2() <= a.l2() * (1 + 1e-12)
    assert derivative_norm(b, (1,)) <= derivative_norm(a, (1,)) * (1 + 1e-12)


def test_exact_gaussian_solution():
    # Gaussian stays Gaussian: variance sigma^2 + 2 beta t, centre moves with alpha t
    f = field(0.3, 0.91)
    t = 40.0
    g = evolve_delta(f, t)
    var = 9.0 + 2 * 0.91 * t
    ref = np.exp(-(AX[0] - 512.0 - 0.3 * t) ** 2 / (2 * var)) / np.sqrt(2 * np.pi * var)
    assert np.max(np.abs(g.values - ref)) < 1e-12


def test_heat_decay_rates():
    ax = periodic_axes([4096], [4096.0])
    g = gaussian_field(ax, [0.0], 2.0, 1.0, [0.3], [[0.91]])
    times = np.geomspace(100, 2000, 12)
    assert decay_report(g, (), times).exponent == pytest.approx(-0.25, abs=0.02)
    assert decay_report(g, (1,), times).exponent == pytest.approx(-0.75, abs=0.03)
    with pytest.raises(ValueError):
        decay_report(g, (), np.linspace(100, 200, 5))


def test_mollifier_first_order_in_epsilon():
    ax = periodic_axes([4096], [4096.0])
    g = gaussian_field(ax, [0.0], 2.0, 1.0, [0.3], [[0.91]])
    times = np.geomspace(100, 2000, 12)
    e2, e4 = mollifier_error(g, 2.0, times), mollifier_error(g, 4.0, times)
    assert np.mean(e4 / e2) == pytest.approx(2.0, abs=0.2)
    assert power_law_fit(times, e2).exponent == pytest.approx(-0.75, abs=0.05)
    # a centred bump has no first moment: second order, faster decay
    c2 = mollifier_error(g, 2.0, times, centered=True)
    assert np.all(c2 < e2) and power_law_fit(times, c2).exponent < -1.0


def test_mollify_preserves_mass_and_checks_resolution():
    f = field()
    m = mollify(f, 4.0)
    assert m.mass() == pytest.approx(f.mass(), abs=1e-13)
    with pytest.raises(ValueError):
        mollify(f, 1.0)  # below two grid cells
    # support in B(0, eps): mollifying a spike spreads it over at most eps
    spike = np.zeros(1024)
    spike[100] = 1.0
    s = mollify(FrontField(AX, spike), 8.0).values
    far = np.abs(AX[0] - AX[0][100]) > 8.0 + 1.0
    assert np.max(np.abs(s[far])) < 1e-3 * np.max(np.abs(s))


def test_power_law_fit_flags_exponential():
    t = np.geomspace(10, 1000, 12)
    assert power_law_fit(t, 3 * t ** -0.5).exponent == pytest.approx(-0.5, abs=1e-12)
    assert power_law_fit(t, 3 * t ** -0.5).algebraic
    assert not power_law_fit(t, np.exp(-0.01 * t)).algebraic


def test_delta_initial_mass():
    x1 = np.linspace(-20, 20, 801)
    pert = np.exp(-x1[:, None] ** 2 / 8) * np.ones((1, 1024))
    d0 = delta_initial(pert, x1[1] - x1[0], -0.5, AX)
    assert np.allclose(d0.values, np.sqrt(8 * np.pi) / 0.5, rtol=1e-10)
    with pytest.raises(ValueError):
        delta_initial(pert, 0.05, 0.0, AX)


def params(y1, t):
    B = np.array([[0.9375, -0.075], [-0.075, 0.91]])
    return GreenKernelParams(np.array([-0.25, 0.3]), np.array([0.3]), np.array([[0.91]]), viscosity_blocks(B), y1, t)


def test_kernel_weights():
    p0 = params(0.0, 10.0)
    assert p0.weight() == 0.0
    assert np.allclose(p0.alpha_plus(), [0.3]) and np.allclose(p0.beta_bar(), [[0.91]])
    p1 = params(-5.0, 10.0)  # |y1| >= |a1 t|
    assert p1.weight() == 1.0
    assert np.allclose(p1.alpha_plus(), [0.3])
    vb = p1.blocks
    v = 0.3 - 0.3 - (-0.25) * vb.b_vec
    assert np.allclose(p1.beta_bar(), vb.b11 * vb.Bbar + vb.b11 / 0.0625 * np.outer(v, v))
    assert params(-1.0, 10.0).weight() == pytest.approx(0.4)


def test_kernels_integrate_to_one():
    p = params(-1.0, 3.0)
    gb = quad(lambda x: leading_green_kernels(p, [0.0, x], [0.0])[0], -60, 60, limit=200)[0]
    assert gb == pytest.approx(1.0, abs=1e-8)
    K = dblquad(lambda xt, x1: leading_green_kernels(p, [x1, xt], [0.0])[1], -40, 40, -40, 40,
                epsabs=1e-10)[0]
    assert K == pytest.approx(1.0, abs=1e-6)


def test_kernel_errors():
    with pytest.raises(KernelError):
        leading_green_kernels(params(0.0, 0.0), [0.0, 0.0], [0.0])
    bad = GreenKernelParams(np.array([-0.25, 0.3]), np.array([0.3]), np.array([[-0.1]]),
                            viscosity_blocks(np.eye(2)), 0.0, 1.0)
    with pytest.raises(KernelError):
        leading_green_kernels(bad, [0.0, 0.0], [0.0])
