"""Chapman-Enskog coefficients of a relaxation system at an equilibrium state.

Two independent routes are provided:

* :func:`enskog_closed_form` evaluates the printed closed-form expressions
  for the convection speeds a*_j, the diffusion tensor b*_jk and the
  eigenvector corrections V^0, V^1_j literally.
* :func:`dispersion_fit` samples the slow eigenvalue branch lambda(xi) of the
  symbol dQ - i sum_j xi_j A^j near xi = 0 and fits
  lambda ~ -i a.xi - xi^T B xi.  This route is authoritative downstream.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Optional, Sequence

import numpy as np

from .model import RelaxationSystem

DEFAULT_RADII = tuple(1e-2 * 0.5 ** k for k in range(7))  # 1e-2 .. 1.6e-4


class BranchAmbiguityError(RuntimeError):
    """Eigenvalue matching could not follow the slow branch unambiguously."""


@dataclass
class DispersionFit:
    a_fit: np.ndarray
    B_fit: np.ndarray
    residual: float
    branch_tolerance: float
    samples: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"a_fit": self.a_fit.tolist(), "B_fit": self.B_fit.tolist(),
                "residual": self.residual, "branch_tolerance": self.branch_tolerance}


@dataclass
class EnskogCoefficients:
    evaluation_point: float
    a_star: np.ndarray
    b_star_formula: np.ndarray
    V0: np.ndarray
    V1: list
    fit: Optional[DispersionFit] = None
    discrepancy: float = 0.0
    discrepancy_flag: bool = False

    @property
    def b_star(self) -> np.ndarray:
        """Diffusion tensor used downstream: the dispersion fit when available."""
        return self.fit.B_fit if self.fit is not None else self.b_star_formula

    def to_dict(self) -> dict:
        out = {
            "u": self.evaluation_point,
            "a_star_formula": self.a_star.tolist(),
            "b_star_formula": self.b_star_formula.tolist(),
            "discrepancy": self.discrepancy,
            "discrepancy_flag": self.discrepancy_flag,
        }
        if self.fit is not None:
            out.update(self.fit.to_dict())
        return out


@dataclass
class ViscosityBlocks:
    b11: float
    b_vec: np.ndarray
    B_sub: np.ndarray
    Bbar: np.ndarray
    convention: str = "printed"

    def reconstruct(self) -> np.ndarray:
        """Rebuild the full tensor b11 * [[1, -+b^T], [b, B*]] in the detected convention."""
        d = 1 + self.b_vec.size
        M = np.empty((d, d))
        M[0, 0] = 1.0
        M[1:, 0] = self.b_vec
        M[0, 1:] = -self.b_vec if self.convention == "printed" else self.b_vec
        M[1:, 1:] = self.B_sub
        return self.b11 * M


def equilibrium_flux(system: RelaxationSystem, u: float, j: int) -> float:
    """Relaxed flux f*_j(u) = f^j(u, v*(u))."""
    return float(system.flux(j, system.equilibrium_state(u))[0])


def equilibrium_flux_derivative(system: RelaxationSystem, u: float, j: int, h: float = 1e-5) -> float:
    return (equilibrium_flux(system, u + h, j) - equilibrium_flux(system, u - h, j)) / (2 * h)


def _blocks(system: RelaxationSystem, U):
    dq = system.dq(U) / system.tau
    q_u, q_v = dq[:, :1], dq[:, 1:]
    blocks = []
    for j in range(1, system.d + 1):
        A = system.A(j, U)
        blocks.append((A[0, 0], A[:1, 1:], A[1:, :1], A[1:, 1:]))
    return q_u, q_v, blocks


def enskog_closed_form(system: RelaxationSystem, u: float) -> EnskogCoefficients:
    """Literal evaluation of the closed-form Chapman-Enskog coefficients at (u, v*(u))."""
    U = system.equilibrium_state(u)
    q_u, q_v, blocks = _blocks(system, U)
    if abs(np.linalg.det(q_v)) < 1e-14:
        raise np.linalg.LinAlgError(f"q_v singular at u={u}")
    qvi = np.linalg.inv(q_v)
    w = qvi @ q_u  # q_v^{-1} q_u, shape (r, 1)
    d = system.d
    a_star = np.array([float(f_u - (f_v @ w)[0, 0]) for f_u, f_v, _, _ in blocks])

    B = np.zeros((d, d))
    for j in range(d):
        _, f_v, g_u, g_v = blocks[j]
        B[j, j] = -(f_v @ qvi @ (g_u - g_v @ w - a_star[j] * w))[0, 0]
    for j in range(d):
        for k in range(j + 1, d):
            _, fj_v, gj_u, gj_v = blocks[j]
            _, fk_v, gk_u, gk_v = blocks[k]
            t1 = (fj_v @ qvi @ (gj_u - gj_v @ w + a_star[k] * w))[0, 0]
            t2 = (fk_v @ qvi @ (gk_u - gk_v @ w + a_star[j] * w))[0, 0]
            B[j, k] = B[k, j] = -0.5 * (t1 + t2)
    B = 0.5 * (B + B.T)

    V0 = np.concatenate([[1.0], -w[:, 0]])
    V1 = []
    for j in range(d):
        _, _, g_u, g_v = blocks[j]
        s1 = -w[:, 0] + 1j * (qvi @ (g_u - g_v @ w + a_star[j] * w))[:, 0]
        V1.append(np.concatenate([[1.0 + 0j], s1]))
    return EnskogCoefficients(float(u), a_star, B, V0, V1)


def default_directions(d: int, n: int = 8) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        th = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    rng = np.random.default_rng(0)
    v = rng.standard_normal((max(n, 4 * d * d), d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _track_slow_branch(system, U, direction, radii_ascending):
    """Follow the eigenvalue emanating from lambda(0) = 0 along increasing radii."""
    lam_prev, lam_prev2, rho_prev, rho_prev2 = 0.0 + 0j, None, 0.0, None
    out = []
    worst = np.inf
    for rho in radii_ascending:
        ev = np.linalg.eigvals(system.symbol(U, rho * direction))
        if lam_prev2 is None:
            pred = lam_prev
        else:
            pred = lam_prev + (lam_prev - lam_prev2) * (rho - rho_prev) / (rho_prev - rho_prev2)
        dist = np.abs(ev - pred)
        order = np.argsort(dist)
        d1 = dist[order[0]]
        d2 = dist[order[1]] if ev.size > 1 else np.inf
        ratio = d2 / max(d1, 1e-300)
        worst = min(worst, ratio)
        if ratio < 10.0:
            raise BranchAmbiguityError(
                f"slow branch ambiguous at rho={rho:g} along {direction}: "
                f"nearest {d1:.3e}, next {d2:.3e}")
        lam = ev[order[0]]
        out.append((rho, lam))
        lam_prev2, rho_prev2 = lam_prev, rho_prev
        lam_prev, rho_prev = lam, rho
    return out, worst


def _monomials(d, deg):
    return list(combinations_with_replacement(range(d), deg))


def dispersion_fit(system: RelaxationSystem, U_eq, directions: Optional[np.ndarray] = None,
                   radii: Sequence[float] = DEFAULT_RADII) -> DispersionFit:
    """Fit lambda(xi) ~ -i a.xi - xi^T B xi on the slow branch of the symbol.

    Cubic and quartic monomials enter the least squares as nuisance terms so
    that the truncation remainder does not bias (a, B); ``residual`` is the
    max deviation of the sampled branch from the quadratic model alone.
    """
    U = np.asarray(getattr(U_eq, "U", U_eq), dtype=float)
    d = system.d
    dirs = default_directions(d) if directions is None else np.atleast_2d(np.asarray(directions, float))
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.asarray(sorted(radii, reverse=True), dtype=float)
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")

    # separation of the zero eigenvalue from the fast spectrum
    ev0 = np.linalg.eigvals(system.symbol(U, np.zeros(d)))
    gap = np.sort(np.abs(ev0))[1]
    norm_A = max(np.linalg.norm(system.A(j, U), 2) for j in range(1, d + 1))
    if gap < 10 * radii[0] * norm_A:
        raise BranchAmbiguityError(f"spectral gap {gap:.3e} too small for radius {radii[0]:g}")

    samples = []
    worst = np.inf
    for e in dirs:
        branch, ratio = _track_slow_branch(system, U, e, radii[::-1])
        worst = min(worst, ratio)
        samples.extend((rho * e, lam) for rho, lam in branch)

    lin = list(range(d))
    quad = _monomials(d, 2)
    nuis = _monomials(d, 3) + _monomials(d, 4)
    nq = len(quad)
    rows_re, rows_im, rhs_re, rhs_im = [], [], [], []
    for xi, lam in samples:
        # unknowns: a (d real), B entries (nq real), nuisance (complex -> 2 reals each)
        mq = [np.prod(xi[list(m)]) for m in quad]
        mn = [np.prod(xi[list(m)]) for m in nuis]
        # lambda = -i a.xi - sum c_m xi^m + sum (p_m + i r_m) xi^m
        rows_re.append(np.concatenate([np.zeros(d), -np.array(mq), mn, np.zeros(len(nuis))]))
        rows_im.append(np.concatenate([-xi[lin], np.zeros(nq), np.zeros(len(nuis)), mn]))
        rhs_re.append(lam.real)
        rhs_im.append(lam.imag)
    M = np.array(rows_re + rows_im)
    rhs = np.array(rhs_re + rhs_im)
    # column scaling keeps the tiny quartic monomials well conditioned
    scale = np.max(np.abs(M), axis=0)
    scale[scale == 0] = 1.0
    sol, *_ = np.linalg.lstsq(M / scale, rhs, rcond=None)
    sol = sol / scale
    a_fit = sol[:d]
    B = np.zeros((d, d))
    for c, (j, k) in zip(sol[d:d + nq], quad):
        if j == k:
            B[j, j] = c
        else:
            B[j, k] = B[k, j] = c / 2
    resid = max(abs(lam - (-1j * a_fit @ xi - xi @ B @ xi)) for xi, lam in samples)
    return DispersionFit(a_fit, B, float(resid), float(worst), samples)


def enskog_report(system: RelaxationSystem, u: float, directions=None,
                  radii: Sequence[float] = DEFAULT_RADII) -> EnskogCoefficients:
    """Closed form and dispersion fit side by side; the fit is authoritative."""
    coeffs = enskog_closed_form(system, u)
    fit = dispersion_fit(system, system.equilibrium_state(u), directions, radii)
    coeffs.fit = fit
    diff = max(float(np.max(np.abs(coeffs.b_star_formula - fit.B_fit))),
               float(np.max(np.abs(coeffs.a_star - fit.a_fit))))
    coeffs.discrepancy = diff
    coeffs.discrepancy_flag = diff > max(10 * fit.residual, 1e-6)
    return coeffs


def viscosity_blocks(B) -> ViscosityBlocks:
    """Split b11 * [[1, -b^T], [b, B*]] and form Bbar = B* - b b^T.

    ``b`` is read from the first column.  A symmetric input (first row equal
    to the first column) is recorded as ``convention='symmetric'``.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    b11 = float(B[0, 0])
    if b11 == 0.0:
        raise ValueError("b11 = 0: viscosity block decomposition undefined")
    b_vec = B[1:, 0] / b11
    B_sub = B[1:, 1:] / b11
    if B.shape[0] > 1 and np.allclose(B[0, 1:], B[1:, 0], rtol=0, atol=1e-14) \
            and not np.allclose(B[0, 1:], 0.0, atol=1e-14):
        convention = "symmetric"
    else:
        convention = "printed"
    Bbar = B_sub - np.outer(b_vec, b_vec)
    return ViscosityBlocks(b11, b_vec, B_sub, Bbar, convention)


def definiteness_check(B, tol: float = 1e-12) -> tuple:
    """(is_positive_definite, min eigenvalue) of a symmetric matrix."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if np.max(np.abs(B - B.T)) > tol:
        raise ValueError("matrix is not symmetric")
    lam_min = float(np.min(np.linalg.eigvalsh(B)))
    return lam_min > 0.0, lam_min
