"""Evans function, root counting and resolvent kernel for planar relaxation shocks.

The eigenvalue ODE W' = A(x; lambda, xi~) W with
A = (A^1 - s)^{-1} (dQ - i sum_j xi_j A^j - lambda - (A^1 - s)')
is propagated with a fourth-order Magnus scheme (exact for frozen
coefficients) batched over lambda.  Decaying bases are initialized at +-L
from spectral projectors applied to a fixed real frame, so D is analytic
in lambda; exponential growth is carried in a complex log-scale.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import schur

from .model import RelaxationSystem
from .profile import WaveProfile

_SQ3 = np.sqrt(3.0)
_GAUSS = (0.5 - _SQ3 / 6, 0.5 + _SQ3 / 6)


class EvansError(RuntimeError):
    pass


def batch_expm(M: np.ndarray) -> np.ndarray:
    """exp of a stack (..., n, n) by Taylor series with common scaling and squaring."""
    nrm = float(np.max(np.sum(np.abs(M), axis=-1))) if M.size else 0.0
    sq = max(0, int(np.ceil(np.log2(nrm / 0.25)))) if nrm > 0.25 else 0
    X = M / 2.0 ** sq
    n = M.shape[-1]
    out = np.broadcast_to(np.eye(n, dtype=M.dtype), M.shape).copy()
    term = out.copy()
    for p in range(1, 13):
        term = term @ X / p
        out = out + term
    for _ in range(sq):
        out = out @ out
    return out


def _xi_vec(xi_tilde, d):
    xt = np.zeros(d - 1) if xi_tilde is None else np.atleast_1d(np.asarray(xi_tilde, dtype=float))
    if xt.size != d - 1:
        raise ValueError(f"xi_tilde must have {d - 1} components")
    return xt


@dataclass
class EvansSetup:
    system: RelaxationSystem
    profile: WaveProfile
    L: float
    h: float
    k: int  # stable dimension at +inf
    x: np.ndarray  # grid nodes -L..L
    E0: np.ndarray  # (n, 2, N, N) Gauss-point coefficients: lambda- and xi-free part
    E2: np.ndarray  # (n, 2, d-1, N, N) xi_j coefficients
    C1: np.ndarray  # (n, 2, N, N) lambda coefficient
    ends: dict  # side -> (E0, E2, C1) limiting coefficients
    R0: dict  # side -> fixed real frame for the projector bases
    qr_every: int = 20
    ode_tol: float = 1e-12

    @property
    def N(self) -> int:
        return self.system.N

    @property
    def s(self) -> float:
        return self.profile.s

    @property
    def i0(self) -> int:
        return int(round(self.L / self.h))

    def coefficient(self, x, lam, xi_tilde=None) -> np.ndarray:
        """A(x; lambda, xi~) at arbitrary points (used for checks and partial steps)."""
        E0, E2, C1 = _coeffs_at(self.system, self.profile, np.atleast_1d(x))
        xt = _xi_vec(xi_tilde, self.system.d)
        return E0 + (np.einsum("j,mjab->mab", xt, E2) if xt.size else 0) + lam * C1

    def limit(self, side: int, lam, xi_tilde=None) -> np.ndarray:
        E0, E2, C1 = self.ends[side]
        xt = _xi_vec(xi_tilde, self.system.d)
        lam = np.asarray(lam, dtype=complex)
        base = E0 + (np.einsum("j,jab->ab", xt, E2) if xt.size else 0)
        return base[None] + lam.reshape(-1)[:, None, None] * C1[None]


def _coeffs_at(system, profile, xs):
    N = system.N
    s = profile.s
    U = profile.interp(xs)
    dU = profile.interp(xs, 1)
    M1 = system.A_batch(1, U) - s * np.eye(N)
    inv = np.linalg.inv(M1)
    nrm = np.maximum(np.linalg.norm(dU, axis=1), 1e-300)
    eps = (1e-6 / nrm)[:, None]
    dA1 = (system.A_batch(1, U + eps * dU) - system.A_batch(1, U - eps * dU)) / (2 * eps[..., None])
    E0 = (inv @ (system.dQ_batch(U) - dA1)).astype(complex)
    E2 = np.stack([-1j * inv @ system.A_batch(j, U) for j in range(2, system.d + 1)], axis=1) \
        if system.d > 1 else np.zeros((xs.size, 0, N, N), complex)
    return E0, E2, -inv.astype(complex)


def _limit_coeffs(system, U, s):
    N = system.N
    inv = np.linalg.inv(system.A(1, U) - s * np.eye(N))
    E0 = (inv @ system.dQ(U)).astype(complex)
    E2 = np.array([-1j * inv @ system.A(j, U) for j in range(2, system.d + 1)]).reshape(system.d - 1, N, N)
    return E0, E2, -inv.astype(complex)


def _select(mu: np.ndarray, side: int, count: int) -> np.ndarray:
    """Indices of the ``count`` most negative (side=+1) or most positive (side=-1) real parts."""
    order = np.argsort(mu.real, kind="stable")
    return order[:count] if side > 0 else order[::-1][:count]


def build_setup(system: RelaxationSystem, profile: WaveProfile, L: Optional[float] = None,
                h: float = 0.05, decay_tol: float = 1e-10, qr_dx: float = 1.0) -> EvansSetup:
    """Precompute coefficients on the Magnus grid and the analytic frames at +-L."""
    if L is None:
        rate = profile.decay_rate if np.isfinite(profile.decay_rate) and profile.decay_rate > 0 else 0.1
        L = min(np.log(1.0 / decay_tol) / rate, profile.L)
    L = h * np.ceil(L / h)
    n = int(round(2 * L / h))
    x = -L + h * np.arange(n + 1)
    xg = np.stack([x[:-1] + c * h for c in _GAUSS], axis=1)  # (n, 2)
    E0, E2, C1 = _coeffs_at(system, profile, xg.reshape(-1))
    N = system.N
    E0 = E0.reshape(n, 2, N, N)
    C1 = C1.reshape(n, 2, N, N)
    E2 = E2.reshape(n, 2, system.d - 1, N, N)
    s = profile.s
    ends = {+1: _limit_coeffs(system, profile.U_plus, s), -1: _limit_coeffs(system, profile.U_minus, s)}
    # dimension of the stable subspace at +inf, read off at large real lambda
    kp = int(np.sum(np.linalg.eigvals(ends[+1][0] + 1.0 * ends[+1][2]).real < 0))
    km = int(np.sum(np.linalg.eigvals(ends[-1][0] + 1.0 * ends[-1][2]).real < 0))
    if kp != km:
        raise EvansError(f"stable dimensions differ at the endpoints ({kp} vs {km}); not a Lax-type splitting")
    R0 = {}
    for side, cnt in ((+1, kp), (-1, N - kp)):
        mu, V = np.linalg.eig(ends[side][0])
        sel = _select(mu, side, cnt)
        B = V[:, sel]
        # real frame for the real invariant subspace
        Bre = np.hstack([B.real, B.imag])
        u_, sv, _ = np.linalg.svd(Bre)
        R0[side] = u_[:, :cnt].astype(complex)
    return EvansSetup(system, profile, float(L), h, kp, x, E0, E2, C1, ends, R0,
                      qr_every=max(1, int(round(qr_dx / h))))


@dataclass
class Bases:
    side: int
    vectors: np.ndarray  # (B, N, m) analytic spanning set P(lambda) R0
    rates: np.ndarray  # (B, m) selected eigenvalues
    trace: np.ndarray  # (B,) sum of the selected eigenvalues
    frame_cond: np.ndarray  # (B,) conditioning of R0^* P R0
    block: np.ndarray  # (B,) whether block (Schur) continuation was used
    gap: np.ndarray  # (B,) distance between selected and remaining eigenvalues


def stable_unstable_bases(setup: EvansSetup, lam, xi_tilde=None, side: int = +1,
                          collision_tol: float = 1e-10) -> Bases:
    """Stable (side=+1, k vectors) or unstable (side=-1, N-k vectors) bases at the ends."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    A = setup.limit(side, lam, xi_tilde)
    N = setup.N
    cnt = setup.k if side > 0 else N - setup.k
    mu, V = np.linalg.eig(A)
    Bn = lam.size
    P = np.empty((Bn, N, N), complex)
    rates = np.empty((Bn, cnt), complex)
    block = np.zeros(Bn, bool)
    gap = np.empty(Bn)
    for b in range(Bn):
        sel = _select(mu[b], side, cnt)
        rest = np.setdiff1d(np.arange(N), sel)
        rates[b] = mu[b, sel]
        gap[b] = np.min(np.abs(mu[b, sel][:, None] - mu[b, rest][None])) if rest.size and sel.size else np.inf
        if gap[b] < collision_tol:
            raise EvansError(f"eigenvalue collision across the splitting at lambda={lam[b]}")
        if np.linalg.cond(V[b]) < 1e8:
            W = np.linalg.inv(V[b])
            P[b] = V[b][:, sel] @ W[sel]
        else:
            # invariant-subspace continuation through ordered Schur forms
            thr = 0.5 * (np.sort(mu[b].real)[cnt - 1] + np.sort(mu[b].real)[cnt]) if side > 0 else \
                0.5 * (np.sort(mu[b].real)[::-1][cnt - 1] + np.sort(mu[b].real)[::-1][cnt])
            f_in = (lambda z: z.real < thr) if side > 0 else (lambda z: z.real > thr)
            f_out = (lambda z: z.real >= thr) if side > 0 else (lambda z: z.real <= thr)
            _, Z1, _ = schur(A[b], output="complex", sort=f_in)
            _, Z2, _ = schur(A[b], output="complex", sort=f_out)
            Tm = np.hstack([Z1[:, :cnt], Z2[:, : N - cnt]])
            sel_m = np.zeros((N, N), complex)
            sel_m[:cnt, :cnt] = np.eye(cnt)
            P[b] = Tm @ sel_m @ np.linalg.inv(Tm)
            block[b] = True
    R0 = setup.R0[side]
    vec = P @ R0
    cond = np.array([np.linalg.cond(R0.conj().T @ v) for v in vec])
    return Bases(side, vec, rates, rates.sum(axis=1), cond, block, gap)


@dataclass
class EvansValue:
    lam: complex
    xi_tilde: tuple
    D: complex  # mantissa: det of blockwise-orthonormal columns at x=0
    log_scale: complex
    bases_at_zero: np.ndarray  # (N, N) [phi+_1..phi+_k, phi-_{k+1}..phi-_N] normalized
    frame_cond: float = 1.0

    def value(self, ref: complex = 0.0) -> complex:
        return complex(self.D * np.exp(self.log_scale - ref))

    @property
    def relative_abs(self) -> float:
        """|det| of the normalized column blocks (sine-type measure of dependence)."""
        return float(abs(self.D))


def _step_mats(setup, j, lam, xt, sign):
    """Magnus-4 propagator over grid cell j, forward (sign=+1) or backward (-1); batched in lambda."""
    base1 = setup.E0[j, 0] + (np.einsum("i,iab->ab", xt, setup.E2[j, 0]) if xt.size else 0)
    base2 = setup.E0[j, 1] + (np.einsum("i,iab->ab", xt, setup.E2[j, 1]) if xt.size else 0)
    A1 = base1[None] + lam[:, None, None] * setup.C1[j, 0][None]
    A2 = base2[None] + lam[:, None, None] * setup.C1[j, 1][None]
    h = setup.h
    Om = 0.5 * h * (A1 + A2) + (_SQ3 / 12.0) * h * h * (A2 @ A1 - A1 @ A2)
    return batch_expm(sign * Om)


def _qr(W):
    Q, R = np.linalg.qr(W)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    return Q, np.sum(np.log(d.astype(complex)), axis=-1), R


def _propagate(setup: EvansSetup, lam, xt, side, W0, j_stop: int, store: bool = False):
    """Carry the columns W0 from the end of the grid to node j_stop.

    Returns (Q, logdet) at j_stop and, if ``store``, per-node (Q_j, R_j).
    """
    n = setup.x.size - 1
    W = W0
    Q, ld, R = _qr(W)
    logdet = ld
    W = Q
    Qs, Rs = {}, {}
    if side > 0:
        js = range(n - 1, j_stop - 1, -1)
        node = lambda j: j
        start = n
    else:
        js = range(0, j_stop)
        node = lambda j: j + 1
        start = 0
    if store:
        Qs[start] = Q
        Rs[start] = R
    cnt = 0
    for j in js:
        E = _step_mats(setup, j, lam, xt, 1 if side < 0 else -1)
        W = E @ W
        cnt += 1
        if store or cnt % setup.qr_every == 0:
            W, ld, R = _qr(W)
            logdet = logdet + ld
            if store:
                Qs[node(j)] = W
                Rs[node(j)] = R
    W, ld, R = _qr(W)
    logdet = logdet + ld
    return W, logdet, (Qs, Rs)


def evans_batch(setup: EvansSetup, lams, xi_tilde=None) -> list:
    """Evans function values for many lambda at a fixed xi~ (one batched sweep per side)."""
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    xt = _xi_vec(xi_tilde, setup.system.d)
    bp = stable_unstable_bases(setup, lams, xt, +1)
    bm = stable_unstable_bases(setup, lams, xt, -1)
    i0 = setup.i0
    Qp, ldp, _ = _propagate(setup, lams, xt, +1, bp.vectors, i0)
    Qm, ldm, _ = _propagate(setup, lams, xt, -1, bm.vectors, i0)
    M = np.concatenate([Qp, Qm], axis=2)
    det = np.linalg.det(M)
    ls = ldp + ldm + setup.L * bp.trace - setup.L * bm.trace
    if not np.all(np.isfinite(det)) or not np.all(np.isfinite(ls)):
        raise EvansError("non-finite Evans value (rescaling overflow)")
    cond = np.maximum(bp.frame_cond, bm.frame_cond)
    return [EvansValue(complex(lams[b]), tuple(xt.tolist()), complex(det[b]), complex(ls[b]), M[b], float(cond[b]))
            for b in range(lams.size)]


def evans_eval(setup: EvansSetup, lam, xi_tilde=None) -> EvansValue:
    return evans_batch(setup, [lam], xi_tilde)[0]


def _values(evs: Sequence[EvansValue], ref=None):
    ls = np.array([e.log_scale for e in evs])
    ref = ls.real.max() if ref is None else ref
    return np.array([e.D for e in evs]) * np.exp(ls - ref)


# ----------------------------------------------------------------------------- contours

@dataclass
class Contour:
    """Closed curve gamma(t), t in [0, 1), positively oriented."""
    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "contour"
    n0: int = 256

    def __call__(self, t):
        return self.fn(np.asarray(t, dtype=float) % 1.0)

    @classmethod
    def polyline(cls, vertices, name="polyline", n0=256) -> "Contour":
        v = np.asarray(vertices, dtype=complex)
        if v[0] == v[-1]:
            v = v[:-1]
        seg = np.abs(np.diff(np.append(v, v[0])))
        cum = np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum()

        def fn(t):
            i = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, v.size - 1)
            w = (t - cum[i]) / (cum[i + 1] - cum[i])
            return v[i] + w * (v[(i + 1) % v.size] - v[i])
        return cls(fn, name, n0)

    @classmethod
    def circle(cls, radius: float, center: complex = 0.0, n0: int = 64) -> "Contour":
        return cls(lambda t: center + radius * np.exp(2j * np.pi * t), f"circle(r={radius})", n0)


def half_annulus(r0: float = 1e-2, R: float = 10.0, shift: float = -1e-4, n0: int = 512) -> Contour:
    """Boundary of {Re lambda >= shift, r0 <= |lambda| <= R}, counterclockwise.

    Pieces: outer arc (bottom to top), left segment down to the inner arc,
    inner arc (clockwise), left segment down to the outer arc.
    """
    if not (abs(shift) < r0 < R):
        raise ValueError("need |shift| < r0 < R")
    phO = np.arccos(shift / R)  # angle of outer-arc endpoints
    phI = np.arccos(shift / r0)
    pieces = [
        ("arc", R, -phO, phO),
        ("seg", R * np.exp(1j * phO), r0 * np.exp(1j * phI)),
        ("arc", r0, phI, -phI),
        ("seg", r0 * np.exp(-1j * phI), R * np.exp(-1j * phO)),
    ]
    lengths = np.array([abs(p[3] - p[2]) * p[1] if p[0] == "arc" else abs(p[2] - p[1]) for p in pieces])
    # give each piece a comparable share of parameter so that small pieces are resolved
    share = np.array([0.4, 0.2, 0.2, 0.2])
    cum = np.concatenate([[0.0], np.cumsum(share)])

    def fn(t):
        out = np.empty(t.shape, complex)
        for i, p in enumerate(pieces):
            m = (t >= cum[i]) & (t < cum[i + 1])
            w = (t[m] - cum[i]) / share[i]
            if p[0] == "arc":
                out[m] = p[1] * np.exp(1j * (p[2] + w * (p[3] - p[2])))
            else:
                a, b = p[1], p[2]
                # log-spaced along the segment: resolves both ends of the 1e-2..10 range
                ra, rb = abs(a), abs(b)
                rr = ra * (rb / ra) ** w
                im = np.sign((a + (b - a) * w).imag) * np.sqrt(np.maximum(rr ** 2 - shift ** 2, 0.0))
                out[m] = shift + 1j * im
        return out
    return Contour(fn, f"half_annulus(r0={r0},R={R},shift={shift})", n0)


@dataclass
class WindingResult:
    winding: Optional[int]
    status: str  # "ok" | "inconclusive"
    raw: float
    n_points: int
    max_step: float
    samples: list = field(default_factory=list)  # (t, lambda, mantissa, log_scale)

    def to_dict(self) -> dict:
        return {"winding": self.winding, "status": self.status, "raw": self.raw,
                "n_points": self.n_points, "max_phase_step": self.max_step}


def _phase_steps(fvals, ls):
    # ratio of consecutive values, exact as a complex number including the log-scales
    nxt = np.roll(np.arange(fvals.size), -1)
    ratio = (fvals[nxt] / fvals) * np.exp(ls[nxt] - ls)
    return np.angle(ratio)


def winding_number(setup: EvansSetup, contour: Contour, xi_tilde=None, max_rounds: int = 14,
                   max_points: int = 20000, divide_by_lambda: bool = False) -> WindingResult:
    """Argument-principle count with adaptive refinement until every phase step < pi/2."""
    t = np.linspace(0.0, 1.0, contour.n0, endpoint=False)
    cache: dict = {}

    def evaluate(ts):
        new = [x for x in ts if x not in cache]
        if new:
            lam = contour(np.array(new))
            for x, ev in zip(new, evans_batch(setup, lam, xi_tilde)):
                cache[x] = ev
        evs = [cache[x] for x in ts]
        D = np.array([e.D for e in evs])
        ls = np.array([e.log_scale for e in evs])
        if divide_by_lambda:
            ls = ls - np.log(np.array([e.lam for e in evs]))
        return evs, D, ls

    status = "inconclusive"
    for _ in range(max_rounds):
        evs, D, ls = evaluate(t.tolist())
        if np.any(D == 0):
            raise EvansError("D vanishes on the contour")
        dphi = _phase_steps(D, ls)
        bad = np.abs(dphi) >= np.pi / 2
        if not bad.any():
            status = "ok"
            break
        if t.size >= max_points:
            break
        tn = np.append(t, 1.0)
        mids = 0.5 * (tn[:-1] + tn[1:])[bad]
        # refine neighbours too: steep phase tends to cluster
        t = np.unique(np.concatenate([t, mids]))
    raw = float(np.sum(dphi) / (2 * np.pi))
    w = int(np.rint(raw))
    if status == "ok" and abs(raw - w) > 1e-6:
        status = "inconclusive"
    samples = [(float(ti), complex(e.lam), complex(e.D), complex(e.log_scale)) for ti, e in zip(t, evs)]
    return WindingResult(w if status == "ok" else None, status, raw, int(t.size),
                         float(np.max(np.abs(dphi))), samples)


# ----------------------------------------------------------------------------- derivative at 0

def cauchy_derivative(f_batch: Callable[[np.ndarray], np.ndarray], radius: float = 1e-3,
                      nodes: int = 64, center: complex = 0.0) -> complex:
    """(1/2 pi i) \\oint f(lambda)/(lambda-c)^2 dlambda by the trapezoid rule."""
    th = 2 * np.pi * np.arange(nodes) / nodes
    z = radius * np.exp(1j * th)
    return complex(np.mean(f_batch(center + z) / z))


def d_lambda_at_origin(setup: EvansSetup, radius: float = 1e-3, nodes: int = 64, xi_tilde=None) -> dict:
    """dD/dlambda(0, xi~) with a common log-scale reference; also the radius-doubling check."""
    ref = evans_eval(setup, 0.0, xi_tilde).log_scale.real

    def f(lams):
        return _values(evans_batch(setup, lams, xi_tilde), ref)
    d1 = cauchy_derivative(f, radius, nodes)
    d2 = cauchy_derivative(f, 2 * radius, nodes)
    ev0 = evans_eval(setup, 0.0, xi_tilde)
    return {"derivative": d1, "derivative_2r": d2, "log_scale": ref,
            "relative_change": float(abs(d2 - d1) / abs(d1)),
            # in units of the normalized-column determinant at lambda = 0
            "abs": float(abs(d1)),
            "D0_relative": ev0.relative_abs}


# ----------------------------------------------------------------------------- lambda*(xi~)

@dataclass
class LowFreqExpansion:
    alpha_tilde: np.ndarray
    beta_tilde: np.ndarray
    theta: float
    fit_residual: float
    xi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lam_star: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    status: str = "ok"

    @property
    def beta_pd(self) -> bool:
        return bool(np.all(np.linalg.eigvalsh(0.5 * (self.beta_tilde + self.beta_tilde.T)) > 0))

    def to_dict(self) -> dict:
        return {"alpha_tilde": self.alpha_tilde.tolist(), "beta_tilde": self.beta_tilde.tolist(),
                "theta": self.theta, "fit_residual": self.fit_residual, "status": self.status,
                "beta_positive_definite": self.beta_pd,
                "samples": [[*x.tolist(), complex(l).real, complex(l).imag] for x, l in zip(self.xi, self.lam_star)]}


def find_root(setup: EvansSetup, lam0: complex, xi_tilde, tol: float = 1e-12, max_iter: int = 30,
              fd: float = 1e-6) -> complex:
    """Newton iteration on D(., xi~) with a centred difference derivative (both points batched)."""
    lam = complex(lam0)
    for _ in range(max_iter):
        evs = evans_batch(setup, [lam, lam + fd, lam - fd], xi_tilde)
        ref = evs[0].log_scale.real
        f0, fp, fm = _values(evs, ref)
        der = (fp - fm) / (2 * fd)
        if der == 0:
            raise EvansError("vanishing derivative in root continuation")
        step = f0 / der
        lam -= step
        if abs(step) < tol * max(1.0, abs(lam)) + tol:
            return lam
    raise EvansError(f"root continuation did not converge near {lam0}")


def _fit_lambda_star(xis: np.ndarray, lams: np.ndarray, nuisance: bool = True):
    """Joint least squares lambda* = -i a.xi - xi^T b xi (+ cubic/quartic nuisance)."""
    X = np.atleast_2d(xis)
    m, d1 = X.shape
    pairs = [(i, j) for i in range(d1) for j in range(i, d1)]
    # imaginary part: -a.xi (+ cubic); real part: -xi^T b xi (+ quartic)
    Aim = [-X[:, i] for i in range(d1)]
    Are = [-(X[:, i] * X[:, j] * (1 if i == j else 2)) for i, j in pairs]
    r2 = np.sum(X * X, axis=1)
    im_cols = Aim + ([X[:, i] * r2 for i in range(d1)] if nuisance else [])
    re_cols = Are + ([r2 * r2] if nuisance else [])
    ci, *_ = np.linalg.lstsq(np.stack(im_cols, 1), lams.imag, rcond=None)
    cr, *_ = np.linalg.lstsq(np.stack(re_cols, 1), lams.real, rcond=None)
    a = ci[:d1]
    B = np.zeros((d1, d1))
    for c, (i, j) in zip(cr[: len(pairs)], pairs):
        B[i, j] = B[j, i] = c
    pred = -1j * X @ a - np.einsum("mi,ij,mj->m", X, B, X)
    res = float(np.max(np.abs(lams - pred)))
    return a, B, res


def track_lambda_star(setup: EvansSetup, xi_path=None, tol: float = 1e-12) -> LowFreqExpansion:
    """Continue the translational zero lambda*(0)=0 along increasing |xi~| and fit its expansion."""
    d1 = setup.system.d - 1
    if d1 == 0:
        raise EvansError("no transverse directions in d=1")
    if xi_path is None:
        xi_path = np.outer(np.linspace(0.01, 0.1, 10), np.eye(d1)[0])
    xi_path = np.atleast_2d(np.asarray(xi_path, dtype=float))
    lams = []
    prev = [(np.zeros(d1), 0j)]
    for xi in xi_path:
        # quadratic extrapolation in |xi| from the last samples
        if len(prev) >= 3:
            (x0, l0), (x1, l1), (x2, l2) = prev[-3:]
            r = [np.linalg.norm(x0), np.linalg.norm(x1), np.linalg.norm(x2)]
            guess = complex(np.polyval(np.polyfit(r, [l0, l1, l2], 2), np.linalg.norm(xi)))
        elif len(prev) == 2:
            (x0, l0), (x1, l1) = prev
            guess = l1 + (l1 - l0) * np.linalg.norm(xi - x1) / max(np.linalg.norm(x1 - x0), 1e-300)
        else:
            guess = -1e-3j
        try:
            lam = find_root(setup, guess, xi, tol=tol)
        except EvansError as exc:
            out = LowFreqExpansion(np.full(d1, np.nan), np.full((d1, d1), np.nan), float("nan"), float("nan"),
                                   xi_path[: len(lams)], np.array(lams, complex), status=f"failed: {exc}")
            return out
        lams.append(lam)
        prev.append((xi, lam))
    lams = np.array(lams)
    a, B, _ = _fit_lambda_star(xi_path, lams, nuisance=True)
    pred = -1j * xi_path @ a - np.einsum("mi,ij,mj->m", xi_path, B, xi_path)
    res = float(np.max(np.abs(lams - pred)))
    theta = float(np.min(-lams.real / np.sum(xi_path ** 2, axis=1)))
    return LowFreqExpansion(a, B, theta, res, xi_path, lams)


# ----------------------------------------------------------------------------- resolvent kernel

@dataclass
class ResolventData:
    lam: complex
    xi_tilde: np.ndarray
    Qp: dict
    Rp: dict
    Qm: dict
    Rm: dict


def _resolvent_data(setup, lam, xi_tilde) -> ResolventData:
    xt = _xi_vec(xi_tilde, setup.system.d)
    lam_a = np.array([complex(lam)])
    bp = stable_unstable_bases(setup, lam_a, xt, +1)
    bm = stable_unstable_bases(setup, lam_a, xt, -1)
    _, _, (Qp, Rp) = _propagate(setup, lam_a, xt, +1, bp.vectors, 0, store=True)
    _, _, (Qm, Rm) = _propagate(setup, lam_a, xt, -1, bm.vectors, setup.x.size - 1, store=True)
    return ResolventData(complex(lam), xt, Qp, Rp, Qm, Rm)


def _node(setup, x):
    j = (x + setup.L) / setup.h
    jr = int(round(j))
    if abs(j - jr) > 1e-8 or not (0 <= jr < setup.x.size):
        raise ValueError(f"x={x} is not a node of the Magnus grid (h={setup.h}, L={setup.L})")
    return jr


def resolvent_kernel(setup: EvansSetup, lam, xi_tilde, x1: float, y1: float,
                     data: Optional[ResolventData] = None, limit: Optional[str] = None) -> np.ndarray:
    """G_{lambda,xi~}(x1, y1) built from the decaying bases and the jump condition.

    x1 and y1 must be Magnus grid nodes.  At x1 == y1 pass ``limit`` '+' or '-'
    for the one-sided values.
    """
    data = data or _resolvent_data(setup, lam, xi_tilde)
    jy, jx = _node(setup, y1), _node(setup, x1)
    N = setup.N
    Phi = np.hstack([data.Qp[jy][0], data.Qm[jy][0]])
    cond = np.linalg.cond(Phi)
    if cond > 1e12:
        raise EvansError(f"basis matrix near singular (cond={cond:.3e}); lambda close to a zero of D")
    U = setup.profile.interp(np.array([y1]))[0]
    M1 = setup.system.A(1, U) - setup.s * np.eye(N)
    Csol = -np.linalg.solve(Phi, np.linalg.inv(M1))
    k = setup.k
    Cp, Cm = Csol[:k], -Csol[k:]
    if x1 == y1 and limit not in ("+", "-"):
        raise ValueError("x1 == y1 needs limit='+' or '-'")
    if x1 > y1 or (x1 == y1 and limit == "+"):
        # frames satisfy Phi(x_j) = Q_j T_j with T_j = R_j T_{j+1}; move y -> x
        c = Cp
        for j in range(jy, jx):
            c = np.linalg.solve(data.Rp[j][0], c)
        return data.Qp[jx][0] @ c
    c = Cm
    for j in range(jy, jx, -1):
        c = np.linalg.solve(data.Rm[j][0], c)
    return data.Qm[jx][0] @ c


def jump_residual(setup: EvansSetup, lam, xi_tilde, y1: float, data: Optional[ResolventData] = None) -> float:
    """|| (A^1 - s)(y1) [G](y1) + I ||."""
    data = data or _resolvent_data(setup, lam, xi_tilde)
    jump = resolvent_kernel(setup, lam, xi_tilde, y1, y1, data, "+") - \
        resolvent_kernel(setup, lam, xi_tilde, y1, y1, data, "-")
    U = setup.profile.interp(np.array([y1]))[0]
    M1 = setup.system.A(1, U) - setup.s * np.eye(setup.N)
    return float(np.max(np.abs(M1 @ jump + np.eye(setup.N))))


def _integrate(setup, lam, xt, x0, x1, Y0, adjoint=False, rtol=1e-12, atol=1e-14):
    """Reference integration of W' = A W (or the adjoint W~' = -A^* W~ ... see below) with DOP853."""
    N = setup.N
    ncol = Y0.shape[1]

    def rhs(x, y):
        A = setup.coefficient(np.array([x]), lam, xt)[0]
        # adjoint: W~' = ((A^1-s)^*)^{-1}(conj(lambda) - dQ^* + (i xi A^j)^*) W~ = -A^* W~ for constant A^1
        M = -A.conj().T if adjoint else A
        return (M @ y.reshape(N, ncol)).reshape(-1)
    sol = solve_ivp(rhs, (x0, x1), Y0.astype(complex).reshape(-1), method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise EvansError(f"reference integration failed: {sol.message}")
    return sol.y[:, -1].reshape(N, ncol)


def _adjoint_coefficient(setup, x, lam, xt):
    N = setup.N
    sysm = setup.system
    U = setup.profile.interp(np.array([x]))[0]
    M1 = sysm.A(1, U) - setup.s * np.eye(N)
    B = sysm.dQ(U) - lam * np.eye(N) - 1j * sum(xt[j] * sysm.A(j + 2, U) for j in range(xt.size))
    return -np.linalg.solve(M1.conj().T, B.conj().T)


def m_constancy(setup: EvansSetup, lam, xi_tilde, z1: float, z2: float,
                data: Optional[ResolventData] = None, max_growth: float = 8.0) -> dict:
    """Compare M(z) = Phi(z)^{-1} (A^1 - s)(z)^{-1} Psi~(z)^{-*} at two base points.

    Phi collects the decaying solutions; Psi~ is a fundamental matrix of the
    adjoint equation (A^1-s)^* W~' = -(dQ - lambda - i xi.A)^* W~, for which
    W~^*(A^1 - s)W is x-independent.

    Phi is carried across [z1, z2] in one direction, so its recessive columns
    lose accuracy like exp(spread * |z2 - z1|), spread being the range of
    Re mu(A) at z1.  z2 is pulled towards z1 so that this exponent stays
    below ``max_growth``; the base point actually used is returned as "z2".
    """
    data = data or _resolvent_data(setup, lam, xi_tilde)
    xt = _xi_vec(xi_tilde, setup.system.d)
    j1 = _node(setup, z1)
    N = setup.N
    mu = np.linalg.eigvals(setup.coefficient(np.array([z1]), lam, xt)[0]).real
    spread = float(mu.max() - mu.min())
    if spread * abs(z2 - z1) > max_growth:
        z2 = z1 + np.sign(z2 - z1) * max_growth / spread
    Phi1 = np.hstack([data.Qp[j1][0], data.Qm[j1][0]])
    Psi1 = np.eye(N, dtype=complex)

    def rhs(x, y):
        Y = y.reshape(2, N, N)
        A = setup.coefficient(np.array([x]), lam, xt)[0]
        Aadj = _adjoint_coefficient(setup, x, lam, xt)
        return np.stack([A @ Y[0], Aadj @ Y[1]]).reshape(-1)
    sol = solve_ivp(rhs, (z1, z2), np.stack([Phi1, Psi1]).reshape(-1), method="DOP853",
                    rtol=1e-13, atol=1e-15)
    if not sol.success:
        raise EvansError(sol.message)
    Y = sol.y[:, -1].reshape(2, N, N)
    Phi2, Psi2 = Y

    def M_at(z, Phi, Psi):
        U = setup.profile.interp(np.array([z]))[0]
        M1 = setup.system.A(1, U) - setup.s * np.eye(N)
        return np.linalg.solve(Phi, np.linalg.solve(M1, np.linalg.inv(Psi.conj().T)))
    M1_, M2_ = M_at(z1, Phi1, Psi1), M_at(z2, Phi2, Psi2)
    diff = float(np.max(np.abs(M1_ - M2_)) / np.max(np.abs(M1_)))
    return {"M_z1": M1_, "M_z2": M2_, "relative_difference": diff, "z2": float(z2)}


def kernel_decay_rate(setup: EvansSetup, lam, xi_tilde, y1: float = 0.0,
                      distances=None, data: Optional[ResolventData] = None) -> dict:
    """Fit log|G(x1, y1)| against |x1 - y1| on both sides; the rate is the smaller slope."""
    data = data or _resolvent_data(setup, lam, xi_tilde)
    if distances is None:
        distances = np.arange(2.0, 20.0 + 1e-9, 1.0)
    rates = {}
    for side in (+1, -1):
        xs = [y1 + side * r for r in distances]
        g = np.array([np.max(np.abs(resolvent_kernel(setup, lam, xi_tilde, x, y1, data))) for x in xs])
        ok = g > 1e-280
        slope = np.polyfit(np.asarray(distances)[ok], np.log(g[ok]), 1)[0]
        rates[side] = float(-slope)
    return {"rate": min(rates.values()), "rate_right": rates[1], "rate_left": rates[-1]}
