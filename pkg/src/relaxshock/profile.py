"""Planar relaxation shock profiles U(x_1 - s t).

In the co-moving coordinate z = x_1 - s t a profile solves
(A^1(U) - s I) U' = Q(U), U(+-inf) = U_+-, which is handled here as a
two-point boundary value problem on [-L, L] with a phase condition.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_bvp
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .enskog import equilibrium_flux, equilibrium_flux_derivative
from .model import RelaxationSystem, burgers


class ProfileError(RuntimeError):
    pass


@dataclass
class WaveProfile:
    s: float
    z: np.ndarray
    values: np.ndarray  # (n, N)
    derivative: np.ndarray  # (n, N)
    U_minus: np.ndarray
    U_plus: np.ndarray
    decay_rate: float = float("nan")
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self._spline = CubicHermiteSpline(self.z, self.values, self.derivative, axis=0)

    @property
    def amplitude(self) -> float:
        return float(np.linalg.norm(self.U_plus - self.U_minus))

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def L(self) -> float:
        return float(max(-self.z[0], self.z[-1]))

    def interp(self, zq, nu: int = 0) -> np.ndarray:
        """Cubic Hermite interpolation; constant extension by U_+- outside the grid."""
        zq = np.asarray(zq, dtype=float)
        zc = np.clip(zq, self.z[0], self.z[-1])
        out = self._spline(zc, nu) if nu else self._spline(zc)
        if nu:
            out = np.where(((zq < self.z[0]) | (zq > self.z[-1]))[..., None], 0.0, out)
        return out

    def with_values(self, values, derivative=None) -> "WaveProfile":
        return WaveProfile(self.s, self.z.copy(), np.array(values),
                           self.derivative.copy() if derivative is None else np.array(derivative),
                           self.U_minus, self.U_plus, self.decay_rate, dict(self.info))

    def summary(self) -> dict:
        return {"s": self.s, "amplitude": self.amplitude, "decay_rate": self.decay_rate,
                "L": self.L, "n": int(self.z.size), **{k: v for k, v in self.info.items()
                                                         if isinstance(v, (int, float, bool, str))}}


def rankine_hugoniot_speed(system: RelaxationSystem, u_minus: float, u_plus: float,
                           return_lax: bool = False):
    """Shock speed s = [f*_1]/[u]; optionally also whether the Lax condition holds."""
    if u_minus == u_plus:
        raise ValueError("endpoints must differ (u_minus == u_plus)")
    fm = equilibrium_flux(system, u_minus, 1)
    fp = equilibrium_flux(system, u_plus, 1)
    s = (fp - fm) / (u_plus - u_minus)
    if not return_lax:
        return s
    lax = equilibrium_flux_derivative(system, u_plus, 1) < s < equilibrium_flux_derivative(system, u_minus, 1)
    return s, bool(lax)


def _profile_rhs(system, s):
    N = system.N

    def rhs(z, Y):
        Us = Y.T
        M = system.A_batch(1, Us) - s * np.eye(N)
        return np.linalg.solve(M, system.Q_batch(Us)[..., None])[..., 0].T
    return rhs


def _endpoint_linearization(system, U, s):
    M = system.A(1, U) - s * np.eye(system.N)
    return np.linalg.solve(M, system.dQ(U))


def _left_rows(J, select):
    """Orthonormal basis of the left invariant subspace for eigenvalues picked by ``select``."""
    lam, V = np.linalg.eig(J)
    W = np.linalg.inv(V)
    rows = [W[i] for i in range(lam.size) if select(lam[i])]
    if not rows:
        return np.zeros((0, J.shape[0]))
    R = np.vstack([np.real(rows), np.imag(rows)])
    u_, sv, vt = np.linalg.svd(R)
    return vt[: len(rows)]


def spectral_distance_to_speed(system, s, us) -> float:
    """min |sigma(A^1) - s| along the equilibrium states ``us``."""
    dist = np.inf
    for u in us:
        ev = np.linalg.eigvals(system.A(1, system.equilibrium_state(u)))
        dist = min(dist, float(np.min(np.abs(ev - s))))
    return dist


def solve_profile(system: RelaxationSystem, u_minus: float, u_plus: float, L: float = 200.0,
                  n: int = 4001, z0: float = 0.0, tol: float = 1e-10,
                  amplitude_factor: float = 0.3) -> WaveProfile:
    """Solve for the traveling wave connecting (u_-, v*(u_-)) to (u_+, v*(u_+)).

    The phase is fixed by u(z0) = (u_- + u_+)/2.  Boundary conditions project
    U(-L) - U_- off the unstable subspace at U_- and U(L) - U_+ off the
    unstable subspace at U_+.
    """
    s, lax = rankine_hugoniot_speed(system, u_minus, u_plus, return_lax=True)
    N = system.N
    Um = system.equilibrium_state(u_minus)
    Up = system.equilibrium_state(u_plus)
    seg = np.linspace(u_minus, u_plus, 41)
    dist = spectral_distance_to_speed(system, s, seg)
    if dist < 1e-8:
        raise ProfileError(f"A^1 - sI singular along the connecting segment (distance {dist:.2e})")
    small_amp = abs(u_plus - u_minus) <= amplitude_factor * dist

    tol_im = 1e-10
    Jm = _endpoint_linearization(system, Um, s)
    Jp = _endpoint_linearization(system, Up, s)
    lam_m = np.linalg.eigvals(Jm)
    lam_p = np.linalg.eigvals(Jp)
    left_rows = _left_rows(Jm, lambda l: l.real <= tol_im)
    right_rows = _left_rows(Jp, lambda l: l.real > tol_im)
    if left_rows.shape[0] + right_rows.shape[0] + 1 != N:
        raise ProfileError(
            f"boundary condition count mismatch: {left_rows.shape[0]} + {right_rows.shape[0]} + 1 != {N}")
    rate_m = float(np.min([l.real for l in lam_m if l.real > tol_im]))
    rate_p = float(np.min([-l.real for l in lam_p if l.real < -tol_im]))

    rhs = _profile_rhs(system, s)
    mid = 0.5 * (u_minus + u_plus)
    Lm, Lp = L + z0, L - z0  # half-lengths on each side of z0
    if Lm <= 0 or Lp <= 0:
        raise ValueError("z0 must lie inside (-L, L)")

    def fun(zeta, Y):
        left = rhs(None, Y[:N]) * Lm
        right = rhs(None, Y[N:]) * Lp
        return np.vstack([left, right])

    def bc(ya, yb):
        return np.concatenate([
            yb[:N] - ya[N:],
            [ya[N] - mid],
            left_rows @ (ya[:N] - Um),
            right_rows @ (yb[N:] - Up),
        ])

    m = max(401, n // 4)
    zeta = np.linspace(0.0, 1.0, m)
    zl = z0 - Lm * (1 - zeta)
    zr = z0 + Lp * zeta
    kappa = min(rate_m, rate_p)

    def guess(z):
        u = mid - 0.5 * (u_minus - u_plus) * np.tanh(-0.5 * kappa * (z - z0)) * -1
        return np.array([system.equilibrium_state(ui) for ui in u]).T

    Y0 = np.vstack([guess(zl), guess(zr)])
    res = solve_bvp(fun, bc, zeta, Y0, tol=tol, max_nodes=200000, bc_tol=1e-12)
    if not res.success:
        raise ProfileError(f"profile Newton iteration failed: {res.message}")

    z = np.linspace(-L, L, n)
    values = np.empty((n, N))
    deriv = np.empty((n, N))
    lm = z <= z0
    zeta_l = (z[lm] - (z0 - Lm)) / Lm
    zeta_r = (z[~lm] - z0) / Lp
    values[lm] = res.sol(zeta_l)[:N].T
    deriv[lm] = res.sol(zeta_l, 1)[:N].T / Lm
    values[~lm] = res.sol(zeta_r)[N:].T
    deriv[~lm] = res.sol(zeta_r, 1)[N:].T / Lp

    end_err = max(np.max(np.abs(values[0] - Um)), np.max(np.abs(values[-1] - Up)))
    if end_err > 1e-6:
        raise ProfileError(f"truncation L={L} too small: endpoint mismatch {end_err:.2e}")
    info = {"lax": lax, "small_amplitude": bool(small_amp), "speed_distance": dist,
            "endpoint_error": float(end_err), "rate_minus": rate_m, "rate_plus": rate_p,
            "bvp_nodes": int(res.x.size), "bvp_max_residual": float(np.max(res.rms_residuals))}
    prof = WaveProfile(s, z, values, deriv, Um, Up, min(rate_m, rate_p), info)
    prof.info["fitted_decay_rate"] = fitted_decay_rate(prof)
    prof.info["residual"] = profile_residual(prof, system)
    return prof


def fitted_decay_rate(profile: WaveProfile, lo: float = 1e-11, hi: float = 1e-4) -> float:
    """Slowest exponential approach rate to U_+- from log-linear tail fits."""
    rates = []
    amp = max(profile.amplitude, 1e-300)
    for U_end, side in ((profile.U_minus, -1), (profile.U_plus, 1)):
        dev = np.linalg.norm(profile.values - U_end, axis=1) / amp
        sel = (dev > lo) & (dev < hi) & (side * profile.z > 0)
        if np.count_nonzero(sel) < 5:
            continue
        slope = np.polyfit(profile.z[sel], np.log(dev[sel]), 1)[0]
        rates.append(abs(slope))
    return float(min(rates)) if rates else float("nan")


def jin_xin_exact_profile(a: float, epsilon: float, u_center: float, L: Optional[float] = None,
                          n: int = 4001, r: int = 1) -> WaveProfile:
    """Closed-form Jin-Xin profile for f(u) = u^2/2 with u_+- = u_center -+ epsilon.

    u(z) = u_center - epsilon tanh(epsilon z / (2 (a^2 - s^2))), s = u_center,
    v = s u + (epsilon^2 - s^2)/2.  With ``r=2`` a third component w is
    appended, solving -s w' = f2(u) - w for f2 = 0 (w = 0); only r=1 is exact
    in general.
    """
    s = float(u_center)
    D = a * a - s * s
    if D <= 0:
        raise ValueError("characteristic speed collision: a^2 <= s^2")
    if abs(u_center) + abs(epsilon) >= a:
        raise ValueError("subcharacteristic condition |u| < a violated")
    if L is None:
        L = 20.0 * 2 * D / max(abs(epsilon), 1e-12) if epsilon != 0 else 10.0
    z = np.linspace(-L, L, n)
    k = epsilon / (2 * D)
    th = np.tanh(k * z)
    u = s - epsilon * th
    du = -epsilon * k * (1 - th ** 2)
    c0 = 0.5 * (epsilon ** 2 - s ** 2)
    v = s * u + c0
    dv = s * du
    cols = [u, v] + [np.zeros_like(u)] * (r - 1)
    dcols = [du, dv] + [np.zeros_like(u)] * (r - 1)
    f = burgers()
    Um = np.array([s - epsilon, f(s - epsilon)] + [0.0] * (r - 1))
    Up = np.array([s + epsilon, f(s + epsilon)] + [0.0] * (r - 1))
    rate = abs(epsilon) / D if epsilon != 0 else float("nan")
    return WaveProfile(s, z, np.stack(cols, 1), np.stack(dcols, 1), Um, Up, rate,
                       {"exact": True, "a": a, "epsilon": epsilon})


def profile_residual(profile: WaveProfile, system: RelaxationSystem, pointwise: bool = False):
    """sup_z |(A^1(U) - s I) U' - Q(U)| using the stored derivative."""
    N = profile.N
    M = system.A_batch(1, profile.values) - profile.s * np.eye(N)
    r = np.einsum("mij,mj->mi", M, profile.derivative) - system.Q_batch(profile.values)
    res = np.max(np.abs(r), axis=1)
    return res if pointwise else float(np.max(res))


def derivative_consistency(profile: WaveProfile) -> float:
    """sup |U'_stored - d/dz CubicSpline(values)| (independent derivative recomputation)."""
    cs = CubicSpline(profile.z, profile.values, axis=0)
    return float(np.max(np.abs(cs(profile.z, 1) - profile.derivative)))


def align_translation(profile: WaveProfile, z_ref: np.ndarray, u_ref: np.ndarray) -> float:
    """Shift h minimizing sup|u(z - h) - u_ref(z)|, found from the midpoint crossing."""
    from scipy.optimize import brentq

    u = profile.values[:, 0]
    mid = 0.5 * (profile.U_minus[0] + profile.U_plus[0])
    i = int(np.argmin(np.abs(u - mid)))
    g = lambda zz: profile.interp(zz)[0] - mid
    lo, hi = profile.z[max(i - 2, 0)], profile.z[min(i + 2, u.size - 1)]
    z_own = brentq(g, lo, hi, xtol=1e-14)
    j = int(np.argmin(np.abs(u_ref - mid)))
    cs = CubicSpline(z_ref, u_ref)
    z_r = brentq(lambda zz: cs(zz) - mid, z_ref[max(j - 2, 0)], z_ref[min(j + 2, z_ref.size - 1)], xtol=1e-14)
    return z_r - z_own
