"""Relaxation systems U_t + sum_j F^j(U)_{x_j} = Q(U)/tau with scalar equilibrium.

A state is U = (u, v) with u scalar (conserved) and v in R^r (relaxing).
Fluxes, the source and their Jacobians are plain callables so that user
systems can be supplied without subclassing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class PolyFlux:
    """Scalar polynomial flux f(u) = sum_k coeffs[k] u**k.

    Polynomial fluxes cover the built-in test models (Burgers, linear) and
    can be handed to compiled kernels as a coefficient vector.
    """

    coeffs: tuple

    def __call__(self, u):
        return np.polynomial.polynomial.polyval(u, self.coeffs)

    def deriv(self, u, m: int = 1):
        c = np.polynomial.polynomial.polyder(self.coeffs, m) if len(self.coeffs) > m else [0.0]
        return np.polynomial.polynomial.polyval(u, c)

    @property
    def padded(self) -> Array:
        """Coefficients padded to degree two (used by the simulator kernels)."""
        c = np.zeros(3)
        if len(self.coeffs) > 3:
            raise ValueError("only fluxes of degree <= 2 have padded coefficients")
        c[: len(self.coeffs)] = self.coeffs
        return c

    def describe(self) -> dict:
        return {"kind": "poly", "coeffs": [float(c) for c in self.coeffs]}


def burgers() -> PolyFlux:
    return PolyFlux((0.0, 0.0, 0.5))


def linear_flux(c: float) -> PolyFlux:
    return PolyFlux((0.0, float(c)))


def flux_from_config(spec) -> PolyFlux:
    """Build a flux from a config entry: {kind: burgers} / {kind: linear, c: ..} / {kind: poly, coeffs: [..]}."""
    if isinstance(spec, PolyFlux):
        return spec
    kind = spec.get("kind")
    if kind == "burgers":
        return burgers()
    if kind == "linear":
        return linear_flux(spec["c"])
    if kind == "poly":
        return PolyFlux(tuple(float(c) for c in spec["coeffs"]))
    raise ValueError(f"unknown flux kind {kind!r}")


@dataclass(frozen=True)
class StatePoint:
    u: float
    v: Array

    @property
    def U(self) -> Array:
        return np.concatenate([[self.u], np.atleast_1d(self.v)])

    @classmethod
    def from_array(cls, U) -> "StatePoint":
        U = np.asarray(U, dtype=float)
        return cls(float(U[0]), U[1:].copy())


def fd_jacobian(fun: Callable[[Array], Array], U: Array, h: Optional[float] = None) -> Array:
    """Central-difference Jacobian of ``fun`` at ``U``."""
    U = np.asarray(U, dtype=float)
    f0 = np.atleast_1d(fun(U))
    J = np.empty((f0.size, U.size))
    for k in range(U.size):
        hk = h if h is not None else 1e-6 * (1.0 + abs(U[k]))
        e = np.zeros_like(U)
        e[k] = hk
        J[:, k] = (np.atleast_1d(fun(U + e)) - np.atleast_1d(fun(U - e))) / (2 * hk)
    return J


@dataclass(frozen=True)
class RelaxationSystem:
    """Hyperbolic relaxation system with scalar equilibrium model.

    ``fluxes[j](U)`` returns F^{j+1}(U) in R^N, ``source(U)`` returns
    q(U) in R^r and ``equilibrium(u)`` returns v*(u).  Missing Jacobians are
    replaced by central differences and ``analytic_jacobians`` is False.
    """

    name: str
    d: int
    r: int
    fluxes: tuple
    source: Callable
    equilibrium: Callable
    jac_fluxes: Optional[tuple] = None
    jac_source: Optional[Callable] = None
    tau: float = 1.0
    symmetrizer: Optional[Callable] = None
    u_range: tuple = (-np.inf, np.inf)
    params: dict = field(default_factory=dict)
    vectorized: bool = False

    def __post_init__(self):
        if self.d < 1 or self.r < 1:
            raise ValueError("need d >= 1 and r >= 1")
        if len(self.fluxes) != self.d:
            raise ValueError(f"expected {self.d} fluxes, got {len(self.fluxes)}")
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    @property
    def N(self) -> int:
        return 1 + self.r

    @property
    def analytic_jacobians(self) -> bool:
        return self.jac_fluxes is not None and self.jac_source is not None

    # --- evaluation -------------------------------------------------------
    def flux(self, j: int, U) -> Array:
        """F^j(U) for axis j = 1..d."""
        return np.asarray(self.fluxes[j - 1](np.asarray(U, dtype=float)), dtype=float)

    def A(self, j: int, U) -> Array:
        """Flux Jacobian A^j(U) = dF^j(U)."""
        U = np.asarray(U, dtype=float)
        if self.jac_fluxes is not None:
            return np.asarray(self.jac_fluxes[j - 1](U), dtype=float)
        return fd_jacobian(self.fluxes[j - 1], U)

    def q(self, U) -> Array:
        return np.atleast_1d(np.asarray(self.source(np.asarray(U, dtype=float)), dtype=float))

    def dq(self, U) -> Array:
        U = np.asarray(U, dtype=float)
        if self.jac_source is not None:
            return np.atleast_2d(np.asarray(self.jac_source(U), dtype=float))
        return fd_jacobian(self.source, U)

    def Q(self, U) -> Array:
        """Full source (0, q(U))/tau in R^N."""
        return np.concatenate([[0.0], self.q(U)]) / self.tau

    def dQ(self, U) -> Array:
        out = np.zeros((self.N, self.N))
        out[1:, :] = self.dq(U)
        return out / self.tau

    def v_star(self, u: float) -> Array:
        return np.atleast_1d(np.asarray(self.equilibrium(u), dtype=float))

    def equilibrium_state(self, u: float) -> Array:
        return np.concatenate([[u], self.v_star(u)])

    def symbol(self, U, xi) -> Array:
        """Linearized Fourier symbol P(xi) = dQ - i sum_j xi_j A^j at U."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        P = self.dQ(U).astype(complex)
        for j in range(self.d):
            P = P - 1j * xi[j] * self.A(j + 1, U)
        return P

    # --- batched evaluation on states stacked as rows, shape (m, N) ---------
    def A_batch(self, j: int, Us) -> Array:
        Us = np.asarray(Us, dtype=float)
        if self.vectorized and self.jac_fluxes is not None:
            return np.moveaxis(np.asarray(self.jac_fluxes[j - 1](Us.T), dtype=float), -1, 0)
        return np.array([self.A(j, U) for U in Us])

    def Q_batch(self, Us) -> Array:
        Us = np.asarray(Us, dtype=float)
        if self.vectorized:
            q = np.atleast_2d(np.asarray(self.source(Us.T), dtype=float))
            return np.vstack([np.zeros((1, Us.shape[0])), q]).T / self.tau
        return np.array([self.Q(U) for U in Us])

    def dQ_batch(self, Us) -> Array:
        Us = np.asarray(Us, dtype=float)
        if self.vectorized and self.jac_source is not None:
            dq = np.moveaxis(np.asarray(self.jac_source(Us.T), dtype=float), -1, 0)
            out = np.zeros((Us.shape[0], self.N, self.N))
            out[:, 1:, :] = dq
            return out / self.tau
        return np.array([self.dQ(U) for U in Us])

    def in_range(self, u: float) -> bool:
        return self.u_range[0] <= u <= self.u_range[1]


def equilibrium_residual(system: RelaxationSystem, u: float) -> Array:
    """q(u, v*(u)); zero on the equilibrium manifold."""
    if not system.in_range(u):
        raise ValueError(f"u={u} outside admissible range {system.u_range}")
    return system.q(system.equilibrium_state(u))


def jacobian_check(system: RelaxationSystem, U, h: float = 1e-5) -> dict:
    """Max-abs discrepancy between declared and central-difference Jacobians.

    Returns a dict keyed ``A1..Ad`` and ``dq``; entries are ``inf`` when a
    non-finite value shows up, and ``finite`` records whether all were finite.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    U = np.asarray(U.U if isinstance(U, StatePoint) else U, dtype=float)
    out = {}
    finite = True
    pairs = [(f"A{j + 1}", system.fluxes[j], lambda V, j=j: system.A(j + 1, V)) for j in range(system.d)]
    pairs.append(("dq", system.source, system.dq))
    for key, fun, jac in pairs:
        Ja = np.atleast_2d(jac(U))
        Jn = fd_jacobian(fun, U, h)
        if not (np.all(np.isfinite(Ja)) and np.all(np.isfinite(Jn))):
            finite = False
            out[key] = float("inf")
        else:
            out[key] = float(np.max(np.abs(Ja - Jn)))
    out["max"] = max(out[k] for k in out)
    out["finite"] = finite
    out["analytic"] = system.analytic_jacobians
    return out


def _const_jac(M, U) -> Array:
    """Constant Jacobian broadcast over any trailing batch dimensions of U."""
    M = np.asarray(M, dtype=float)
    extra = np.shape(U)[1:]
    return np.broadcast_to(M.reshape(M.shape + (1,) * len(extra)), M.shape + extra).copy()


def builtin_jin_xin_1d(a: float = 1.0, flux_f: PolyFlux | None = None, tau: float = 1.0) -> RelaxationSystem:
    """Jin-Xin model u_t + v_x = 0, v_t + a^2 u_x = (f(u) - v)/tau."""
    if a <= 0 or tau <= 0:
        raise ValueError("a and tau must be positive")
    f = flux_f if flux_f is not None else burgers()
    a2 = a * a

    def flux1(U):
        return np.array([U[1], a2 * U[0]])

    def jac1(U):
        return _const_jac([[0.0, 1.0], [a2, 0.0]], U)

    def source(U):
        return np.array([f(U[0]) - U[1]])

    def jac_source(U):
        z = np.zeros_like(U[0])
        return np.array([[f.deriv(U[0]), z - 1.0]])

    def symmetrizer(U):
        fp = f.deriv(U[0])
        return np.array([[a2, -fp], [-fp, 1.0]])

    return RelaxationSystem(
        name="jin_xin_1d", d=1, r=1,
        fluxes=(flux1,), source=source, equilibrium=lambda u: np.array([f(u)]),
        jac_fluxes=(jac1,), jac_source=jac_source, tau=tau, symmetrizer=symmetrizer,
        u_range=(-a, a), params={"a": a, "f": f}, vectorized=True,
    )


def builtin_jin_xin_2d(a: float = 1.0, b: float = 1.0, f1: PolyFlux | None = None,
                       f2: PolyFlux | None = None, tau: float = 1.0) -> RelaxationSystem:
    """3x3 Jin-Xin model: u_t + v_x + w_y = 0, v_t + a^2 u_x = (f1 - v)/tau, w_t + b^2 u_y = (f2 - w)/tau."""
    if a <= 0 or b <= 0 or tau <= 0:
        raise ValueError("a, b and tau must be positive")
    f1 = f1 if f1 is not None else burgers()
    f2 = f2 if f2 is not None else linear_flux(0.0)
    a2, b2 = a * a, b * b

    def flux1(U):
        return np.array([U[1], a2 * U[0], 0.0 * U[0]])

    def flux2(U):
        return np.array([U[2], 0.0 * U[0], b2 * U[0]])

    def jac1(U):
        return _const_jac([[0.0, 1.0, 0.0], [a2, 0.0, 0.0], [0.0, 0.0, 0.0]], U)

    def jac2(U):
        return _const_jac([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [b2, 0.0, 0.0]], U)

    def source(U):
        return np.array([f1(U[0]) - U[1], f2(U[0]) - U[2]])

    def jac_source(U):
        z = np.zeros_like(U[0])
        return np.array([[f1.deriv(U[0]) + z, z - 1.0, z], [f2.deriv(U[0]) + z, z, z - 1.0]])

    umax = min(a, b)
    return RelaxationSystem(
        name="jin_xin_2d", d=2, r=2,
        fluxes=(flux1, flux2), source=source,
        equilibrium=lambda u: np.array([f1(u), f2(u)]),
        jac_fluxes=(jac1, jac2), jac_source=jac_source, tau=tau,
        u_range=(-umax, umax), params={"a": a, "b": b, "f1": f1, "f2": f2}, vectorized=True,
    )


def build_system(name: str, params: dict) -> RelaxationSystem:
    """Construct a built-in system by config name."""
    p = dict(params)
    if name == "jin_xin_1d":
        return builtin_jin_xin_1d(a=float(p["a"]), flux_f=flux_from_config(p["f"]),
                                  tau=float(p.get("tau", 1.0)))
    if name == "jin_xin_2d":
        return builtin_jin_xin_2d(a=float(p["a"]), b=float(p["b"]),
                                  f1=flux_from_config(p["f1"]), f2=flux_from_config(p["f2"]),
                                  tau=float(p.get("tau", 1.0)))
    raise ValueError(f"unknown model {name!r}; expected 'jin_xin_1d' or 'jin_xin_2d'")


def sample_states(system: RelaxationSystem, n: int, rng: np.random.Generator,
                  box: Sequence[float] | None = None, spread: float = 0.1) -> Array:
    """Random states near the equilibrium manifold inside the admissible u-box."""
    lo, hi = box if box is not None else system.u_range
    lo, hi = max(lo, -1e3), min(hi, 1e3)
    us = rng.uniform(lo, hi, size=n) * 0.95
    out = np.empty((n, system.N))
    for i, u in enumerate(us):
        out[i] = system.equilibrium_state(u)
        out[i, 1:] += spread * rng.standard_normal(system.r)
    return out
