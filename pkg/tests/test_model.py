import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relaxshock.model import (PolyFlux, build_system, builtin_jin_xin_1d, burgers, equilibrium_residual,
                              flux_from_config, jacobian_check, linear_flux, sample_states)


def test_jacobians_match_finite_differences(jx1, jx2, rng):
    for system in (jx1, jx2):
        for U in sample_states(system, 5, rng, box=(-0.9, 0.9)):
            chk = jacobian_check(system, U)
            assert chk["finite"] and chk["max"] < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.95, 0.95))
def test_equilibrium_manifold_is_zero_set(u):
    sysm = build_system("jin_xin_2d", {"a": 1, "b": 1, "f1": {"kind": "burgers"}, "f2": {"kind": "linear", "c": 0.3}})
    assert np.allclose(equilibrium_residual(sysm, u), 0.0, atol=1e-15)
    U = sysm.equilibrium_state(u)
    assert np.allclose(sysm.Q(U), 0.0, atol=1e-15)


def test_jin_xin_2d_structure(jx2):
    U = np.array([0.4, 0.08, 0.12])
    A1, A2 = jx2.A(1, U), jx2.A(2, U)
    assert np.allclose(A1, [[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    assert np.allclose(A2, [[0, 0, 1], [0, 0, 0], [1, 0, 0]])
    # source (f1(u) - v, f2(u) - w)
    assert np.allclose(jx2.Q(U), [0.0, 0.08 - 0.08, 0.12 - 0.12])
    assert np.allclose(jx2.dQ(U), [[0, 0, 0], [0.4, -1, 0], [0.3, 0, -1]])


def test_symbol_and_batch_consistency(jx2, rng):
    Us = sample_states(jx2, 6, rng, box=(-0.9, 0.9))
    for j in (1, 2):
        assert np.allclose(jx2.A_batch(j, Us), np.array([jx2.A(j, U) for U in Us]))
    assert np.allclose(jx2.dQ_batch(Us), np.array([jx2.dQ(U) for U in Us]))
    xi = np.array([0.3, -0.7])
    U = Us[0]
    assert np.allclose(jx2.symbol(U, xi), jx2.dQ(U) - 1j * (0.3 * jx2.A(1, U) - 0.7 * jx2.A(2, U)))


def test_flux_config():
    assert flux_from_config({"kind": "burgers"}) == burgers()
    assert flux_from_config({"kind": "linear", "c": 0.3})(2.0) == pytest.approx(0.6)
    f = flux_from_config({"kind": "poly", "coeffs": [1, 0, 3]})
    assert f(2.0) == pytest.approx(13.0) and f.deriv(2.0) == pytest.approx(12.0)
    with pytest.raises(ValueError):
        flux_from_config({"kind": "cubic"})
    with pytest.raises(ValueError):
        build_system("euler", {})
    with pytest.raises(ValueError):
        builtin_jin_xin_1d(a=-1.0)
    with pytest.raises(ValueError):
        PolyFlux((0, 0, 0, 1)).padded


def test_symmetrizer_1d(jx1):
    # A0 symmetric positive definite and A0 A^1 symmetric for |f'| < a
    U = jx1.equilibrium_state(0.4)
    A0 = jx1.symmetrizer(U)
    assert np.allclose(A0, A0.T) and np.all(np.linalg.eigvalsh(A0) > 0)
    S = A0 @ jx1.A(1, U)
    assert np.allclose(S, S.T)
    T = A0 @ jx1.dQ(U)
    assert np.allclose(T, T.T) and np.all(np.linalg.eigvalsh(T) <= 1e-14)
