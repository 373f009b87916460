"""Direct simulation of a perturbed planar relaxation shock (2-D Jin-Xin model).

Finite volumes in the shock frame: U_t + (F^1(U) - sU)_x1 + F^2(U)_y = Q(U)/tau,
MUSCL reconstruction + local Lax-Friedrichs fluxes, SSPRK2 in time, and
Strang splitting with the exact relaxation solve v -> v* + (v - v*) e^{-dt/tau}.
Transverse direction periodic, zero-gradient extrapolation at x1 = +-Lx1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numba
import numpy as np
from scipy import stats
from scipy.interpolate import CubicSpline

from .front import FrontField, delta_initial, evolve_delta, mollify, periodic_axes
from .model import RelaxationSystem
from .profile import WaveProfile

LIMITERS = {"none": 0, "minmod": 1, "vanleer": 2, "mc": 3}


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimGrid:
    Lx1: float
    W: float
    nx1: int
    ny: int

    @property
    def dx1(self) -> float:
        return 2 * self.Lx1 / self.nx1

    @property
    def dy(self) -> float:
        return self.W / self.ny

    @property
    def x1(self) -> np.ndarray:
        return -self.Lx1 + (np.arange(self.nx1) + 0.5) * self.dx1

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.dy

    def refined(self, factor: int = 2, transverse: bool = False) -> "SimGrid":
        return SimGrid(self.Lx1, self.W, self.nx1 * factor, self.ny * (factor if transverse else 1))

    def cells_across(self, width: float) -> float:
        return width / self.dx1


@dataclass
class SimState:
    t: float
    cells: np.ndarray  # (N, nx1, ny)
    frame_speed: float
    grid: SimGrid

    def copy(self) -> "SimState":
        return SimState(self.t, self.cells.copy(), self.frame_speed, self.grid)

    def mass(self) -> float:
        return float(np.sum(self.cells[0]) * self.grid.dx1 * self.grid.dy)


# ----------------------------------------------------------------------------- kernels

@numba.njit(cache=True)
def _limit(dl, dr, kind):
    if kind == 0:
        return 0.5 * (dl + dr)
    if dl * dr <= 0.0:
        return 0.0
    if kind == 1:
        return dl if abs(dl) < abs(dr) else dr
    if kind == 2:
        return 2.0 * dl * dr / (dl + dr)
    c = 0.5 * (dl + dr)
    m = 2.0 * dl if abs(dl) < abs(dr) else 2.0 * dr
    return c if abs(c) < abs(m) else m


@numba.njit(cache=True)
def _recon(a0, a1, a2, a3, kind):
    """Left/right states at the interface between the cells holding a1 and a2."""
    return a1 + 0.5 * _limit(a1 - a0, a2 - a1, kind), a2 - 0.5 * _limit(a2 - a1, a3 - a2, kind)


@numba.njit(cache=True)
def _rhs(U, out, dx, dy, s, a2, b2, ax, ay, kind, bflux):
    """out = -(d/dx1)(F^1 - sU) - (d/dy) F^2 with MUSCL + LLF.

    Ghost cells beyond x1 = +-Lx1 are copies of the edge cells (zero gradient);
    bflux accumulates the u-flux through the left/right boundaries (times dy).
    """
    nc, nx, ny = U.shape
    out[:] = 0.0
    idx = 1.0 / dx
    idy = 1.0 / dy
    # x1-direction, interface i-1/2 between cells i-1 and i (clamped indices)
    for i in range(nx + 1):
        iL = max(i - 1, 0)
        iR = min(i, nx - 1)
        iLL = max(i - 2, 0)
        iRR = min(i + 1, nx - 1)
        for j in range(ny):
            uL, uR = _recon(U[0, iLL, j], U[0, iL, j], U[0, iR, j], U[0, iRR, j], kind)
            vL, vR = _recon(U[1, iLL, j], U[1, iL, j], U[1, iR, j], U[1, iRR, j], kind)
            wL, wR = _recon(U[2, iLL, j], U[2, iL, j], U[2, iR, j], U[2, iRR, j], kind)
            f0 = 0.5 * ((vL - s * uL) + (vR - s * uR)) - 0.5 * ax * (uR - uL)
            f1 = 0.5 * ((a2 * uL - s * vL) + (a2 * uR - s * vR)) - 0.5 * ax * (vR - vL)
            f2 = -0.5 * s * (wL + wR) - 0.5 * ax * (wR - wL)
            if i > 0:
                out[0, i - 1, j] -= f0 * idx
                out[1, i - 1, j] -= f1 * idx
                out[2, i - 1, j] -= f2 * idx
            else:
                bflux[0] += f0 * dy
            if i < nx:
                out[0, i, j] += f0 * idx
                out[1, i, j] += f1 * idx
                out[2, i, j] += f2 * idx
            else:
                bflux[1] += f0 * dy
    if ny == 1:
        return
    # y-direction, interface j+1/2 between j and j+1 (periodic)
    for i in range(nx):
        for j in range(ny):
            jm = j - 1 if j > 0 else ny - 1
            jp = j + 1 if j < ny - 1 else 0
            jpp = jp + 1 if jp < ny - 1 else 0
            uL, uR = _recon(U[0, i, jm], U[0, i, j], U[0, i, jp], U[0, i, jpp], kind)
            vL, vR = _recon(U[1, i, jm], U[1, i, j], U[1, i, jp], U[1, i, jpp], kind)
            wL, wR = _recon(U[2, i, jm], U[2, i, j], U[2, i, jp], U[2, i, jpp], kind)
            g0 = 0.5 * (wL + wR) - 0.5 * ay * (uR - uL)
            g1 = -0.5 * ay * (vR - vL)
            g2 = 0.5 * b2 * (uL + uR) - 0.5 * ay * (wR - wL)
            out[0, i, j] -= g0 * idy
            out[1, i, j] -= g1 * idy
            out[2, i, j] -= g2 * idy
            out[0, i, jp] += g0 * idy
            out[1, i, jp] += g1 * idy
            out[2, i, jp] += g2 * idy


@numba.njit(cache=True)
def _relax(U, c1, c2, fac):
    nc, nx, ny = U.shape
    for i in range(nx):
        for j in range(ny):
            u = U[0, i, j]
            f1 = c1[0] + u * (c1[1] + u * c1[2])
            f2 = c2[0] + u * (c2[1] + u * c2[2])
            U[1, i, j] = f1 + (U[1, i, j] - f1) * fac
            U[2, i, j] = f2 + (U[2, i, j] - f2) * fac


@numba.njit(cache=True)
def _advance(U, nsteps, dt, dx, dy, s, a2, b2, ax, ay, kind, c1, c2, tau, check):
    """nsteps of Strang(relax dt/2, SSPRK2 dt, relax dt/2); returns u mass flux through x1-boundaries."""
    fac = np.exp(-0.5 * dt / tau)
    k1 = np.empty_like(U)
    k2 = np.empty_like(U)
    U1 = np.empty_like(U)
    bflux = np.zeros(2)
    bf1 = np.zeros(2)
    bf2 = np.zeros(2)
    for n in range(nsteps):
        _relax(U, c1, c2, fac)
        bf1[:] = 0.0
        bf2[:] = 0.0
        _rhs(U, k1, dx, dy, s, a2, b2, ax, ay, kind, bf1)
        for c in range(3):
            for i in range(U.shape[1]):
                for j in range(U.shape[2]):
                    U1[c, i, j] = U[c, i, j] + dt * k1[c, i, j]
        _rhs(U1, k2, dx, dy, s, a2, b2, ax, ay, kind, bf2)
        for c in range(3):
            for i in range(U.shape[1]):
                for j in range(U.shape[2]):
                    U[c, i, j] = 0.5 * U[c, i, j] + 0.5 * (U1[c, i, j] + dt * k2[c, i, j])
        _relax(U, c1, c2, fac)
        # net inflow of u: left flux enters, right flux leaves
        bflux[0] += 0.5 * dt * (bf1[0] + bf2[0])
        bflux[1] += 0.5 * dt * (bf1[1] + bf2[1])
        if check:
            for c in range(3):
                for i in range(U.shape[1]):
                    for j in range(U.shape[2]):
                        if not np.isfinite(U[c, i, j]):
                            return bflux, n, i, j
    return bflux, -1, -1, -1


# ----------------------------------------------------------------------------- driver

@dataclass
class Scheme:
    s: float
    a: float
    b: float
    tau: float
    c1: np.ndarray
    c2: np.ndarray
    limiter: str = "none"
    cfl: float = 0.45

    @classmethod
    def from_system(cls, system: RelaxationSystem, s: float, limiter: str = "none", cfl: float = 0.45) -> "Scheme":
        if system.name != "jin_xin_2d":
            raise ValueError("the simulator supports the built-in jin_xin_2d model only")
        p = system.params
        return cls(float(s), float(p["a"]), float(p["b"]), float(system.tau),
                   p["f1"].padded, p["f2"].padded, limiter, cfl)

    @property
    def ax(self) -> float:
        return abs(self.s) + self.a

    @property
    def ay(self) -> float:
        return self.b

    def dt(self, grid: SimGrid) -> float:
        return self.cfl / (self.ax / grid.dx1 + self.ay / grid.dy)

    def advance(self, state: SimState, nsteps: int, dt: Optional[float] = None) -> np.ndarray:
        """In-place advance by ``nsteps``; returns accumulated boundary u-fluxes (left, right)."""
        dt = self.dt(state.grid) if dt is None else dt
        g = state.grid
        bflux, n, i, j = _advance(state.cells, int(nsteps), dt, g.dx1, g.dy, self.s, self.a ** 2, self.b ** 2,
                                  self.ax, self.ay, LIMITERS[self.limiter], self.c1, self.c2, self.tau, True)
        if n >= 0:
            raise SimulationError(f"non-finite cell at step {n}, x1-index {i}, y-index {j}")
        state.t += nsteps * dt
        return bflux


def step(scheme: Scheme, state: SimState, dt: float) -> SimState:
    """One time step (returns a new state)."""
    if dt > scheme.dt(state.grid) * (1 + 1e-12):
        raise ValueError("dt exceeds the CFL bound")
    out = state.copy()
    scheme.advance(out, 1, dt)
    return out


def sample_profile(profile: WaveProfile, grid: SimGrid) -> np.ndarray:
    """Profile values at the cell centres, (N, nx1)."""
    return profile.interp(grid.x1).T.copy()


def relax_discrete_profile(scheme: Scheme, profile: WaveProfile, grid: SimGrid, t_max: float = 3000.0,
                           tol: float = 1e-13, chunk: int = 500) -> tuple:
    """Run the scheme on the y-independent profile until it is a numerical fixed point.

    Returns ((N, nx1) discrete profile, info).  The same dt as in 2-D is used so the
    fixed point is the one of the full scheme.
    """
    g1 = SimGrid(grid.Lx1, grid.dy, grid.nx1, 1)
    st = SimState(0.0, sample_profile(profile, grid)[:, :, None].copy(), scheme.s, g1)
    dt = scheme.dt(grid)
    change = np.inf
    while st.t < t_max:
        prev = st.cells.copy()
        scheme.advance(st, chunk, dt)
        change = float(np.max(np.abs(st.cells - prev))) / (chunk * dt)
        if change < tol:
            break
    return st.cells[:, :, 0].copy(), {"t_relax": st.t, "final_rate": change}


@dataclass
class Perturbation:
    amplitude: float
    sigma_x1: float
    sigma_y: float
    x1_center: float = 0.0
    y_center: Optional[float] = None
    shape: str = "gaussian"  # "gaussian" | "antisymmetric"

    def field(self, grid: SimGrid) -> np.ndarray:
        yc = grid.W / 2 if self.y_center is None else self.y_center
        X = grid.x1[:, None] - self.x1_center
        Y = grid.y[None, :] - yc
        Y = (Y + grid.W / 2) % grid.W - grid.W / 2
        g = self.amplitude * np.exp(-X ** 2 / (2 * self.sigma_x1 ** 2) - Y ** 2 / (2 * self.sigma_y ** 2))
        if self.shape == "antisymmetric":
            g = g * X / self.sigma_x1
        elif self.shape != "gaussian":
            raise ValueError(f"unknown perturbation shape {self.shape!r}")
        return g

    def support_radius(self, tail: float = 1e-16) -> float:
        return self.sigma_x1 * np.sqrt(2 * np.log(1 / tail)) + abs(self.x1_center)

    def analytic_l1(self) -> float:
        if self.shape != "gaussian":
            raise ValueError("closed form only for the gaussian shape")
        return abs(self.amplitude) * 2 * np.pi * self.sigma_x1 * self.sigma_y


def perturbation_norms(pert: np.ndarray, grid: SimGrid) -> dict:
    cell = grid.dx1 * grid.dy
    x1 = grid.x1[:, None]
    out = {"L1": float(np.sum(np.abs(pert)) * cell), "L2": float(np.sqrt(np.sum(pert ** 2) * cell)),
           "x1_weighted_L1": float(np.sum(np.abs(x1 * pert)) * cell)}
    # discrete Sobolev surrogate: finite-difference derivatives up to order 3
    hs = np.sum(pert ** 2)
    for k in range(1, 4):
        dxk = np.diff(pert, n=k, axis=0) / grid.dx1 ** k
        dyk = np.diff(np.concatenate([pert, pert[:, :k]], axis=1), n=k, axis=1) / grid.dy ** k
        hs += np.sum(dxk ** 2) + np.sum(dyk ** 2)
    out["H3_surrogate"] = float(np.sqrt(hs * cell))
    return out


def init_perturbed_shock(base: np.ndarray, grid: SimGrid, pert: Perturbation, s: float) -> tuple:
    """cells = discrete profile + perturbation in u; returns (SimState, norms)."""
    if pert.support_radius() >= grid.Lx1:
        raise ValueError("perturbation support touches the x1-boundary")
    N = base.shape[0]
    cells = np.repeat(base[:, :, None], grid.ny, axis=2)
    p = pert.field(grid)
    cells[0] += p
    return SimState(0.0, cells, s, grid), perturbation_norms(p, grid)


def delta_from_state(state: SimState, base: np.ndarray, u_jump: float) -> np.ndarray:
    """Mass-based front displacement -[u]^{-1} int (u - u_bar) dx1 for each y."""
    return -np.sum(state.cells[0] - base[0][:, None], axis=0) * state.grid.dx1 / u_jump


class ShiftedProfile:
    """Cubic interpolant of the discrete profile, constant beyond the grid."""

    def __init__(self, base: np.ndarray, grid: SimGrid):
        self.x = grid.x1
        self.base = base
        self._sp = CubicSpline(self.x, base, axis=1)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        zc = np.clip(z, self.x[0], self.x[-1])
        return self._sp(zc)


def perturbation_norm(state: SimState, shifted: ShiftedProfile, delta: Optional[np.ndarray]) -> float:
    """|| U(x, t) - U_bar(x1 - delta(y, t)) ||_{L^2}."""
    g = state.grid
    if delta is None or np.all(delta == 0):
        ref = np.repeat(shifted.base[:, :, None], g.ny, axis=2)
    else:
        delta = np.asarray(delta, dtype=float)
        if np.max(np.abs(delta)) > 0.25 * g.Lx1:
            raise ValueError("front displacement exceeds the interpolation range")
        Z = g.x1[:, None] - delta[None, :]
        ref = shifted(Z.ravel()).reshape(-1, g.nx1, g.ny)
    diff = state.cells - ref
    return float(np.sqrt(np.sum(diff ** 2) * g.dx1 * g.dy))


@dataclass
class DecayReport:
    times: np.ndarray
    norms: np.ndarray
    exponent: float
    half_width: float
    theoretical: float
    t_min: float
    verdict: bool
    threshold: float = -0.55

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "ci_half_width": self.half_width,
                "theoretical_exponent": self.theoretical, "t_min": self.t_min,
                "threshold": self.threshold, "pass": self.verdict,
                "times": self.times.tolist(), "norms": self.norms.tolist()}


def decay_fit(times, norms, t_min: float = 10.0, d: int = 2, sigma: float = 0.0,
              threshold: float = -0.55, confidence: float = 0.95) -> DecayReport:
    """Log-log fit of norm against (1+t) over t >= t_min."""
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    m = times >= t_min
    if m.sum() < 8 or times[m].max() < 10 * t_min:
        raise ValueError("need >= 8 samples spanning a decade beyond t_min")
    X = np.log1p(times[m])
    Y = np.log(norms[m])
    res = stats.linregress(X, Y)
    q = stats.t.ppf(0.5 + confidence / 2, m.sum() - 2)
    theo = -(d - 1) / 4 - 0.5 + sigma
    return DecayReport(times, norms, float(res.slope), float(q * res.stderr), theo, t_min,
                       bool(res.slope <= threshold), threshold)


# ----------------------------------------------------------------------------- experiment

@dataclass
class ExperimentResult:
    times: np.ndarray
    residual_tracked: np.ndarray
    residual_untracked: np.ndarray
    mass: np.ndarray
    centroid: np.ndarray
    boundary_flux: np.ndarray
    tracked: DecayReport
    untracked: DecayReport
    drift_speed: float
    alpha_used: np.ndarray
    beta_used: np.ndarray
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"tracked": self.tracked.to_dict(), "untracked": self.untracked.to_dict(),
                "exponent_gap": self.untracked.exponent - self.tracked.exponent,
                "drift_speed": self.drift_speed, "alpha_used": self.alpha_used.tolist(),
                "beta_used": self.beta_used.tolist(), **self.info}

    def series_rows(self) -> list:
        return [(float(t), float(r), float(m), float(c), float(ru))
                for t, r, m, c, ru in zip(self.times, self.residual_tracked, self.mass, self.centroid,
                                          self.residual_untracked)]


def _circular_phase(delta: np.ndarray, y: np.ndarray, W: float) -> float:
    """Angle of the first Fourier moment: the centroid on the periodic box, modulo W."""
    return float(np.angle(np.sum(delta * np.exp(2j * np.pi * y / W))))


def run_experiment(system: RelaxationSystem, profile: WaveProfile, grid: SimGrid, pert: Perturbation,
                   alpha, beta, times=None, epsilon: float = 4.0, t_min: float = 10.0,
                   limiter: str = "none", cfl: float = 0.45, progress: Optional[Callable] = None,
                   dump: Optional[Callable] = None) -> ExperimentResult:
    """Perturbed-shock run with front tracking; residuals against U_bar(x1 - delta^eps(y, t))."""
    if times is None:
        times = np.concatenate([[0.0], np.geomspace(10.0, 200.0, 16)])
    times = np.asarray(times, dtype=float)
    scheme = Scheme.from_system(system, profile.s, limiter, cfl)
    base, rinfo = relax_discrete_profile(scheme, profile, grid)
    u_jump = float(profile.U_plus[0] - profile.U_minus[0])
    state, norms = init_perturbed_shock(base, grid, pert, profile.s)
    axes = (grid.y,)
    d0 = delta_initial(pert.field(grid), grid.dx1, u_jump, axes, alpha, beta, source="evans")
    d0 = mollify(d0, epsilon)
    shifted = ShiftedProfile(base, grid)
    dt = scheme.dt(grid)
    m0 = state.mass()
    res_t, res_u, mass, cen, bfl = [], [], [], [], []
    flux_acc = np.zeros(2)
    for tk in times:
        nsteps = int(round((tk - state.t) / dt))
        if nsteps > 0:
            flux_acc += scheme.advance(state, nsteps, dt)
        dk = evolve_delta(d0, state.t)
        res_t.append(perturbation_norm(state, shifted, dk.values))
        res_u.append(perturbation_norm(state, shifted, None))
        mass.append(state.mass())
        bfl.append(flux_acc[0] - flux_acc[1])
        cen.append(_circular_phase(delta_from_state(state, base, u_jump), grid.y, grid.W))
        if progress:
            progress(state.t, res_t[-1], res_u[-1])
        if dump:
            dump(state)
    t_arr = np.array([float(t) for t in times])
    t_real = t_arr.copy()
    res_t, res_u = np.array(res_t), np.array(res_u)
    tracked = decay_fit(t_real, res_t, t_min)
    untracked = decay_fit(t_real, res_u, t_min)
    cen = np.unwrap(np.array(cen)) * grid.W / (2 * np.pi)
    m = t_real >= t_min
    drift = float(np.polyfit(t_real[m], cen[m], 1)[0])
    info = {"relaxation": rinfo, "initial_norms": norms, "dt": dt, "grid": grid.__dict__,
            "mass_initial": m0, "epsilon": epsilon, "limiter": limiter}
    return ExperimentResult(t_real, res_t, res_u, np.array(mass), cen, np.array(bfl), tracked, untracked,
                            drift, np.atleast_1d(alpha), np.atleast_2d(beta), info)
