"""Front deformation delta(x~, t): transverse convection-diffusion, mollification,
decay rates and the leading convected heat kernels.

delta_t + a~ . grad delta = div(beta~ grad delta) on a periodic box [0, W)^{d-1};
evolution is exact in Fourier space.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .enskog import ViscosityBlocks


@dataclass
class FrontField:
    axes: tuple  # per transverse direction: node coordinates on [0, W)
    values: np.ndarray
    t: float = 0.0
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(1))
    beta: np.ndarray = field(default_factory=lambda: np.eye(1))
    source: str = "unspecified"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        if self.values.ndim != len(self.axes):
            raise ValueError("values dimension does not match the number of axes")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def spacing(self) -> tuple:
        return tuple(float(a[1] - a[0]) for a in self.axes)

    @property
    def width(self) -> tuple:
        return tuple(float(a.size * (a[1] - a[0])) for a in self.axes)

    @property
    def cell(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def spectral(self) -> np.ndarray:
        return np.fft.fftn(self.values)

    def wavenumbers(self) -> list:
        ks = [2 * np.pi * np.fft.fftfreq(a.size, a[1] - a[0]) for a in self.axes]
        return np.meshgrid(*ks, indexing="ij")

    def mass(self) -> float:
        return float(np.sum(self.values) * self.cell)

    def l2(self) -> float:
        return float(np.sqrt(np.sum(self.values ** 2) * self.cell))

    def with_values(self, values, t=None) -> "FrontField":
        return replace(self, values=np.asarray(values, dtype=float), t=self.t if t is None else t)


def periodic_axes(n: Sequence[int], width: Sequence[float]) -> tuple:
    return tuple(np.arange(m) * (w / m) for m, w in zip(n, width))


def front_width_for(beta_max: float, t_final: float, factor: float = 40.0) -> float:
    """Transverse box width from the W >= factor*sqrt(beta*T) rule (a lower bound)."""
    return factor * np.sqrt(beta_max * t_final)


def delta_initial(u_perturbation: np.ndarray, dx1: float, u_jump: float, axes: tuple,
                  alpha=None, beta=None, source: str = "unspecified") -> FrontField:
    """delta_0(x~) = -[u]^{-1} int U_0 dx_1 (first component), trapezoid rule in x_1.

    ``u_perturbation`` has the x_1 axis first, followed by the transverse axes.
    """
    if u_jump == 0:
        raise ValueError("zero jump [u]")
    mass = np.trapezoid(np.asarray(u_perturbation, dtype=float), dx=dx1, axis=0)
    d1 = len(axes)
    return FrontField(axes, -mass / u_jump, 0.0,
                      np.zeros(d1) if alpha is None else alpha,
                      np.eye(d1) if beta is None else beta, source)


def multiplier(field_: FrontField, dt: float) -> np.ndarray:
    K = field_.wavenumbers()
    conv = sum(a * k for a, k in zip(field_.alpha, K))
    diff = sum(field_.beta[i, j] * K[i] * K[j] for i in range(field_.dim) for j in range(field_.dim))
    return np.exp((-1j * conv - diff) * dt)


def evolve_delta(field_: FrontField, t_target: float) -> FrontField:
    """Exact spectral propagation to ``t_target``."""
    dt = t_target - field_.t
    if dt < 0:
        raise ValueError("t_target must not precede the current time")
    if np.any(np.linalg.eigvalsh(0.5 * (field_.beta + field_.beta.T)) <= 0):
        raise ValueError("beta~ must be positive definite")
    vals = np.fft.ifftn(field_.spectral * multiplier(field_, dt)).real
    return field_.with_values(vals, t_target)


def _bump_transform(K: list, epsilon: float, centered: bool, nodes: int = 48) -> np.ndarray:
    """Fourier transform of the unit-mass bump c (1 - |z - c0|^2/rho^2)^4 on |z - c0| < rho.

    Centered: c0 = 0, rho = epsilon.  Default (one-sided): rho = epsilon/2 and c0 = rho e_1,
    so the support still lies in B(0, epsilon) but the first moment is nonzero.
    """
    d1 = len(K)
    rho = epsilon if centered else 0.5 * epsilon
    c0 = np.zeros(d1)
    if not centered:
        c0[0] = rho
    g, w = np.polynomial.legendre.leggauss(nodes)
    if d1 == 1:
        z = rho * g
        wt = rho * w * (1 - g ** 2) ** 4
        pts = z[:, None]
    elif d1 == 2:
        # polar: Gauss in r on [0, rho], trapezoid in angle
        r = 0.5 * rho * (g + 1)
        wr = 0.5 * rho * w * r * (1 - (r / rho) ** 2) ** 4
        th = 2 * np.pi * np.arange(2 * nodes) / (2 * nodes)
        pts = np.stack([np.outer(r, np.cos(th)).ravel(), np.outer(r, np.sin(th)).ravel()], axis=1)
        wt = np.repeat(wr, th.size) * (2 * np.pi / th.size)
    else:
        raise NotImplementedError("mollifier for more than two transverse dimensions")
    wt = wt / wt.sum()
    pts = pts + c0
    phase = sum(np.multiply.outer(Kj, pts[:, j]) for j, Kj in enumerate(K))
    return np.exp(-1j * phase) @ wt


def mollify(field_: FrontField, epsilon: float, centered: bool = False) -> FrontField:
    """delta^eps = eta_eps * delta with a compactly supported unit-mass bump (exact transform)."""
    if epsilon <= 0 or epsilon < 2 * max(field_.spacing):
        raise ValueError(f"epsilon={epsilon} below grid resolution (need >= {2 * max(field_.spacing)})")
    eta = _bump_transform(field_.wavenumbers(), epsilon, centered)
    return field_.with_values(np.fft.ifftn(field_.spectral * eta).real)


def derivative_norm(field_: FrontField, alpha: Sequence[int] = ()) -> float:
    """|d^alpha delta|_{L^2} via Parseval."""
    alpha = tuple(alpha) or (0,) * field_.dim
    K = field_.wavenumbers()
    sym = np.ones_like(K[0], dtype=complex)
    for k, a in zip(K, alpha):
        sym = sym * (1j * k) ** a
    hat = field_.spectral * sym
    return float(np.sqrt(np.sum(np.abs(hat) ** 2) * field_.cell / hat.size))


@dataclass
class DecayFit:
    exponent: float
    times: np.ndarray
    norms: np.ndarray
    used: np.ndarray
    algebraic: bool
    residual: float

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "algebraic": self.algebraic, "residual": self.residual,
                "times": self.times.tolist(), "norms": self.norms.tolist()}


def power_law_fit(times, norms, floor: float = 1e2 * np.finfo(float).eps) -> DecayFit:
    """Log-log least squares; flags series that a semi-log (exponential) model fits far better."""
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    used = norms > floor * max(norms.max(), 1e-300)
    lt, ln = np.log(times[used]), np.log(norms[used])
    if used.sum() < 3:
        return DecayFit(float("nan"), times, norms, used, False, float("nan"))
    p, res_pow, *_ = np.polyfit(lt, ln, 1, full=True)
    q, res_exp, *_ = np.polyfit(times[used], ln, 1, full=True)
    rp = float(res_pow[0]) if res_pow.size else 0.0
    re = float(res_exp[0]) if res_exp.size else 0.0
    algebraic = not (re < 1e-3 * rp and rp > 1e-12)
    return DecayFit(float(p[0]), times, norms, used, algebraic, float(np.sqrt(rp / used.sum())))


def decay_report(field0: FrontField, alpha: Sequence[int] = (), times=None,
                 epsilon: Optional[float] = None) -> DecayFit:
    """Fitted exponent of |d^alpha delta(., t)|_{L^2} (optionally of the mollified field)."""
    if times is None:
        times = np.logspace(1, 3, 12)
    times = np.asarray(times, dtype=float)
    if times.max() / times.min() < 10:
        raise ValueError("times must span at least one decade")
    f = mollify(field0, epsilon) if epsilon else field0
    norms = [derivative_norm(evolve_delta(f, t), alpha) for t in times]
    return power_law_fit(times, norms)


def mollifier_error(field0: FrontField, epsilon: float, times, centered: bool = False) -> np.ndarray:
    """|delta^eps(., t) - delta(., t)|_{L^2} at the given times."""
    fe = mollify(field0, epsilon, centered)
    return np.array([evolve_delta(fe, t).with_values(evolve_delta(fe, t).values - evolve_delta(field0, t).values).l2()
                     for t in times])


def gaussian_field(axes: tuple, center, width: float, mass: float = 1.0, alpha=None, beta=None) -> FrontField:
    """Periodic-box Gaussian of given total mass (width = standard deviation)."""
    grids = np.meshgrid(*axes, indexing="ij")
    r2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    d1 = len(axes)
    vals = mass * np.exp(-r2 / (2 * width ** 2)) / (2 * np.pi * width ** 2) ** (d1 / 2)
    return FrontField(axes, vals, 0.0, np.zeros(d1) if alpha is None else alpha,
                      np.eye(d1) if beta is None else beta)


# ----------------------------------------------------------------------------- kernels

class KernelError(ValueError):
    pass


@dataclass
class GreenKernelParams:
    a_plus: np.ndarray  # (a_1^+, a~^+)
    a_bar_tilde: np.ndarray
    beta_tilde: np.ndarray
    blocks: ViscosityBlocks
    y1: float
    t: float

    def weight(self) -> float:
        a1 = float(self.a_plus[0])
        return float(np.clip(abs(self.y1) / abs(a1 * self.t), 0.0, 1.0))

    def alpha_plus(self) -> np.ndarray:
        w = self.weight()
        return (1 - w) * np.atleast_1d(self.a_bar_tilde) + w * np.atleast_1d(self.a_plus[1:])

    def beta_bar(self) -> np.ndarray:
        w = self.weight()
        a1 = float(self.a_plus[0])
        b11 = self.blocks.b11
        v = np.atleast_1d(self.a_plus[1:]) - np.atleast_1d(self.a_bar_tilde) - a1 * self.blocks.b_vec
        end = b11 * self.blocks.Bbar + b11 / a1 ** 2 * np.outer(v, v)
        return (1 - w) * np.atleast_2d(self.beta_tilde) + w * end


def _gauss(z: np.ndarray, cov: np.ndarray, t: float) -> float:
    covs = 0.5 * (cov + cov.T)
    ev = np.linalg.eigvalsh(covs)
    if np.any(ev <= 0):
        raise KernelError(f"covariance not positive definite (eigenvalues {ev})")
    m = z.size
    c = (4 * np.pi * t) ** (-m / 2) / np.sqrt(np.linalg.det(covs))
    return float(c * np.exp(-z @ np.linalg.solve(covs, z) / (4 * t)))


def leading_green_kernels(params: GreenKernelParams, x, y_tilde) -> tuple:
    """(g-bar^+, K^+) at x = (x_1, x~) for source (y_1, y~) after time t."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    yt = np.atleast_1d(np.asarray(y_tilde, dtype=float))
    t = params.t
    if t <= 0:
        raise KernelError("t must be positive")
    try:
        gbar = _gauss(x[1:] - yt - params.alpha_plus() * t, params.beta_bar(), t)
    except KernelError as exc:
        raise KernelError(f"{exc} at interpolation weight {params.weight():.6g}") from None
    y = np.concatenate([[params.y1], yt])
    K = _gauss(x - y - np.asarray(params.a_plus) * t, params.blocks.reconstruct(), t)
    return gbar, K
