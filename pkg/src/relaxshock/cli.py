"""Command-line pipeline: hypotheses -> profile -> enskog -> evans -> front -> simulate.

Every stage returns (status, results, reason).  Statuses are "pass", "fail",
"inconclusive" or "skipped"; a stage whose prerequisite did not pass is
skipped, never run.  The JSON report is deterministic for a given config and
seed; wall-times go to a separate ``timings.json``.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import platform
import sys
import time
from typing import Optional

import numpy as np

from . import __version__
from .config import DEPENDS, SOFT, STAGES, ConfigError, config_hash, load_config, resolve_stages
from .enskog import definiteness_check, enskog_report, equilibrium_flux, equilibrium_flux_derivative, viscosity_blocks
from .model import build_system
from .profile import ProfileError, rankine_hugoniot_speed, solve_profile

REPORT_SCHEMA = "relaxshock-report/1"
RUN_ORDER = ("profile", "hypotheses", "enskog", "evans", "front", "simulate")


# ----------------------------------------------------------------------------- serialization

def _plain(obj):
    """Recursively convert numpy / complex values into JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _fmt_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return "null"
    if x == int(x) and abs(x) < 1e16:
        return repr(float(x))
    return "%.17g" % x


def dumps17(obj, indent: int = 1, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    obj = _plain(obj) if _level == 0 else obj
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps17(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps17(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps17(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, int):
        return str(obj)
    return json.dumps(obj)


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(["%.17g" % v if isinstance(v, float) else v for v in r])


def versions() -> dict:
    import numba
    import scipy
    import yaml
    return {"relaxshock": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "pyyaml": yaml.__version__}


# ----------------------------------------------------------------------------- stages

class Context:
    def __init__(self, cfg: dict, out_dir: str):
        self.cfg = cfg
        self.out = out_dir
        self.system = build_system(cfg["model"]["name"], cfg["model"]["params"])
        self.um = float(cfg["endpoints"]["u_minus"])
        self.up = float(cfg["endpoints"]["u_plus"])
        self.profile = None
        self.evans_setup = None
        self.enskog = None
        self.files: list = []

    def path(self, name: str) -> str:
        self.files.append(name)
        return os.path.join(self.out, name)

    def transverse_coefficients(self, results: dict):
        """(alpha~, beta~, source) for the front model and the simulation."""
        ev = results.get("evans", {})
        if ev.get("status") == "pass" and "low_frequency" in ev.get("results", {}):
            lf = ev["results"]["low_frequency"]
            return np.array(lf["alpha_tilde"]), np.array(lf["beta_tilde"]), "evans"
        if self.enskog is None:
            self.enskog = [enskog_report(self.system, u) for u in (self.um, self.up)]
        a = np.mean([e.fit.a_fit[1:] for e in self.enskog], axis=0)
        B = np.mean([e.fit.B_fit[1:, 1:] for e in self.enskog], axis=0)
        return a, B, "enskog"


def stage_profile(ctx: Context, results):
    p = ctx.cfg["profile"]
    try:
        prof = solve_profile(ctx.system, ctx.um, ctx.up, L=float(p["L"]), n=int(p["n"]), tol=float(p["tol"]),
                             amplitude_factor=float(p["amplitude_factor"]))
    except ProfileError as exc:
        s, lax = rankine_hugoniot_speed(ctx.system, ctx.um, ctx.up, return_lax=True)
        return "fail", {"s": s, "lax": lax}, f"profile solver failed: {exc}"
    ctx.profile = prof
    res = prof.summary()
    res["residual"] = float(prof.info["residual"])
    rows = [(float(z), *map(float, v)) for z, v in zip(prof.z, prof.values)]
    names = ["u"] + [f"v{j + 1}" for j in range(prof.N - 1)]
    _write_csv(ctx.path("profile.csv"), ["z", *names], rows)
    ok = res["residual"] <= 1e-9 and bool(prof.info["lax"])
    return ("pass" if ok else "fail"), res, "" if ok else "residual above 1e-9 or Lax condition violated"


def stage_hypotheses(ctx: Context, results):
    from .spectral_conditions import hypothesis_report
    h = ctx.cfg["hypotheses"]
    s, lax = rankine_hugoniot_speed(ctx.system, ctx.um, ctx.up, return_lax=True)
    states = None
    if ctx.profile is not None:
        idx = np.linspace(0, ctx.profile.z.size - 1, 41).astype(int)
        states = ctx.profile.values[idx]
    rep = hypothesis_report(ctx.system, ctx.um, ctx.up, s, states, seed=int(ctx.cfg["seed"]),
                            restarts=int(h["restarts"]))
    out = {"s": s, "lax": lax, **rep.to_dict()}
    checks = {
        "H1": rep.h1_real_semisimple and rep.h1_s_separation > 1e-8,
        "H2": rep.h2_distinctness > 1e-8,
        "H3": rep.h3_theta > 1e-6,
        "H4": rep.genuine_coupling,
        "kawashima": bool(rep.details["kawashima_pass"]) and (rep.kawashima_theta or 0.0) > 1e-6,
    }
    out["checks"] = checks
    failed = [k for k, v in checks.items() if not v]
    return ("fail" if failed else "pass"), out, ("failed: " + ", ".join(failed)) if failed else ""


def stage_enskog(ctx: Context, results):
    pts = ctx.cfg["enskog"]["points"] or [ctx.um, ctx.up]
    reps = [enskog_report(ctx.system, float(u)) for u in pts]
    if ctx.cfg["enskog"]["points"] is None:
        ctx.enskog = reps
    out = {"points": []}
    ok = True
    for r in reps:
        d = r.to_dict()
        B = r.fit.B_fit
        pd, ev = definiteness_check(B)
        blocks = viscosity_blocks(B)
        d.update({"positive_definite": pd, "min_eigenvalue": ev, "b11": blocks.b11,
                  "b_vec": blocks.b_vec, "Bbar": blocks.Bbar})
        ok &= bool(pd)
        out["points"].append(d)
    out["discrepancy_flag"] = any(r.discrepancy_flag for r in reps)
    return ("pass" if ok else "fail"), out, "" if ok else "effective diffusion not positive definite"


def stage_evans(ctx: Context, results):
    from .evans import (Contour, build_setup, d_lambda_at_origin, evans_eval, half_annulus, jump_residual,
                        kernel_decay_rate, m_constancy, track_lambda_star, winding_number, _resolvent_data)
    e = ctx.cfg["evans"]
    sysm = ctx.system
    setup = build_setup(sysm, ctx.profile, L=e["L"], h=float(e["h"]))
    ctx.evans_setup = setup
    d1 = sysm.d - 1
    xis = [np.full(d1, float(x)) * np.eye(d1)[0] if d1 else np.zeros(0) for x in (e["xi"] if d1 else [0.0])]
    zero = np.zeros(d1)
    out: dict = {"L": setup.L, "h": setup.h, "k": setup.k}
    problems, unsure = [], []

    ev0 = evans_eval(setup, 0.0, zero)
    out["D0_relative"] = ev0.relative_abs
    if ev0.relative_abs > 1e-6:
        problems.append("D(0,0) not ~ 0")

    c = e["contour"]
    contour = half_annulus(float(c["radius_min"]), float(c["radius_max"]), float(c["shift"]), int(c["n0"]))
    wind = []
    rows = []
    for xi in xis:
        w = winding_number(setup, contour, xi)
        wind.append({"xi_tilde": xi, **w.to_dict()})
        rows += [(float(np.linalg.norm(xi)), t, lam.real, lam.imag, D.real, D.imag, ls.real, ls.imag)
                 for t, lam, D, ls in w.samples]
        if w.status != "ok":
            unsure.append(f"winding inconclusive at xi~={xi.tolist()}")
        elif w.winding != 0:
            problems.append(f"winding {w.winding} at xi~={xi.tolist()}")
    out["contour"] = contour.name
    out["winding"] = wind
    _write_csv(ctx.path("evans_contour.csv"),
               ["xi_norm", "t", "lam_re", "lam_im", "D_re", "D_im", "logscale_re", "logscale_im"], rows)

    sc = winding_number(setup, Contour.circle(float(e["small_circle"])), zero)
    out["small_circle"] = sc.to_dict()
    if sc.status != "ok":
        unsure.append("small-circle winding inconclusive")
    elif sc.winding != 1:
        problems.append(f"small-circle winding {sc.winding} != 1")
    der = d_lambda_at_origin(setup, float(e["small_circle"]), int(e["cauchy_nodes"]), zero)
    out["dD_dlambda"] = der
    if not (der["abs"] > 1e-8 and der["relative_change"] < 0.01):
        problems.append("dD/dlambda(0,0) degenerate or radius-sensitive")

    if d1:
        tmax, tn = float(e["track_max"]), int(e["track_n"])
        path = np.outer(np.linspace(tmax / tn, tmax, tn), np.eye(d1)[0])
        lf = track_lambda_star(setup, path)
        lf_half = track_lambda_star(setup, path / 2)
        ratio = lf.fit_residual / lf_half.fit_residual if lf_half.fit_residual > 0 else float("inf")
        jump = (ctx.up - ctx.um)
        ft = [equilibrium_flux(sysm, ctx.up, j + 2) - equilibrium_flux(sysm, ctx.um, j + 2) for j in range(d1)]
        out["low_frequency"] = {**lf.to_dict(), "residual_half": lf_half.fit_residual, "residual_ratio": ratio,
                                "abar_printed": [-f / jump for f in ft], "abar_rh": [f / jump for f in ft]}
        if lf.status != "ok":
            problems.append(f"lambda* continuation: {lf.status}")
        elif not (lf.theta > 0 and lf.beta_pd):
            problems.append("D3: theta <= 0 or beta~ not positive definite")

    r = e["resolvent"]
    kern = []
    for xi_r in r["xi"]:
        xi = np.full(d1, float(xi_r)) * np.eye(d1)[0] if d1 else np.zeros(0)
        for lr, li in r["points"]:
            lam = complex(lr, li)
            data = _resolvent_data(setup, lam, xi)
            y1 = float(r["y1"])
            jr = jump_residual(setup, lam, xi, y1, data)
            mres = m_constancy(setup, lam, xi, -2.0, 2.0, data)
            rate = kernel_decay_rate(setup, lam, xi, y1, data=data)
            kern.append({"lambda": lam, "xi_tilde": xi, "jump_residual": jr,
                         "m_constancy": mres["relative_difference"], "m_z2": mres["z2"], **rate})
    out["resolvent"] = kern
    if kern:
        out["resolvent_summary"] = {"max_jump": max(k["jump_residual"] for k in kern),
                                    "max_m": max(k["m_constancy"] for k in kern),
                                    "min_rate": min(k["rate"] for k in kern)}
        rs = out["resolvent_summary"]
        if not (rs["max_jump"] <= 1e-6 and rs["max_m"] <= 1e-8 and rs["min_rate"] > 0):
            problems.append("resolvent kernel checks failed")
    if problems:
        return "fail", out, "; ".join(problems)
    if unsure:
        return "inconclusive", out, "; ".join(unsure)
    return "pass", out, ""


def stage_front(ctx: Context, results):
    from .front import (GreenKernelParams, gaussian_field, decay_report, leading_green_kernels,
                        mollifier_error, periodic_axes, power_law_fit)
    f = ctx.cfg["front"]
    d1 = ctx.system.d - 1
    if d1 != 1:
        return "skipped", {}, "front model checks are implemented for one transverse dimension"
    alpha, beta, source = ctx.transverse_coefficients(results)
    axes = periodic_axes([int(f["n"])], [float(f["width"])])
    g = gaussian_field(axes, [0.0], float(f["sigma"]), 1.0, alpha, beta)
    times = np.geomspace(float(f["t_start"]), float(f["t_stop"]), int(f["n_times"]))
    r0 = decay_report(g, (), times)
    r1 = decay_report(g, (1,), times)
    eps = [float(x) for x in f["epsilons"]]
    errs = [mollifier_error(g, ep, times) for ep in eps]
    fits = [power_law_fit(times, er) for er in errs]
    out = {"source": source, "alpha_tilde": alpha, "beta_tilde": beta,
           "exponent_l2": r0.exponent, "exponent_grad": r1.exponent,
           "mollifier_exponents": [ft.exponent for ft in fits], "epsilons": eps}
    exp0, exp1 = -d1 / 4, -d1 / 4 - 0.5
    ok = abs(r0.exponent - exp0) <= 0.02 and abs(r1.exponent - exp1) <= 0.03
    ok &= all(abs(ft.exponent - exp1) <= 0.05 for ft in fits)
    if len(eps) >= 2:
        out["epsilon_ratio"] = float(np.mean(errs[1] / errs[0]))
        out["epsilon_ratio_expected"] = eps[1] / eps[0]
        ok &= abs(out["epsilon_ratio"] - eps[1] / eps[0]) <= 0.1 * eps[1] / eps[0]
    rows = [(float(t), float(a), float(b), *[float(er[k]) for er in errs])
            for k, (t, a, b) in enumerate(zip(times, r0.norms, r1.norms))]
    _write_csv(ctx.path("front_series.csv"), ["t", "l2", "grad_l2", *[f"moll_err_eps{e:g}" for e in eps]], rows)

    kc = f["kernels"]
    if kc:
        s = rankine_hugoniot_speed(ctx.system, ctx.um, ctx.up)
        a_plus = np.array([equilibrium_flux_derivative(ctx.system, ctx.up, j + 1) for j in range(ctx.system.d)])
        a_plus[0] -= s
        e = enskog_report(ctx.system, ctx.up)
        blocks = viscosity_blocks(e.fit.B_fit)
        krows = []
        for t in kc.get("t", [1.0]):
            prm = GreenKernelParams(a_plus, alpha, beta, blocks, float(kc.get("y1", 0.0)), float(t))
            for x1 in kc.get("x1", [0.0]):
                for xt in kc.get("x_tilde", [0.0]):
                    gb, K = leading_green_kernels(prm, [x1, xt], [0.0] * d1)
                    krows.append((float(t), float(x1), float(xt), gb, K))
        _write_csv(ctx.path("front_kernels.csv"), ["t", "x1", "x_tilde", "gbar", "K"], krows)
        out["kernel_rows"] = len(krows)
    return ("pass" if ok else "fail"), out, "" if ok else "front decay rates outside tolerance"


def stage_simulate(ctx: Context, results):
    from .sim2d import Perturbation, SimGrid, run_experiment
    sc = ctx.cfg["simulate"]
    if ctx.system.name != "jin_xin_2d":
        return "skipped", {}, "simulation is implemented for jin_xin_2d only"
    alpha, beta, source = ctx.transverse_coefficients(results)
    grid = SimGrid(float(sc["Lx1"]), float(sc["W"]), int(sc["nx1"]), int(sc["ny"]))
    pert = Perturbation(float(sc["amplitude"]), float(sc["sigma_x1"]), float(sc["sigma_y"]), shape=sc["shape"])
    times = np.concatenate([[0.0], np.geomspace(float(sc["t_min"]), float(sc["t_final"]), int(sc["n_times"]))])
    dump = None
    if sc["dump_frames"]:
        os.makedirs(os.path.join(ctx.out, "frames"), exist_ok=True)
        counter = [0]

        def dump(state):
            k = counter[0]
            counter[0] += 1
            name = f"frames/frame_{k:04d}"
            state.cells.astype("<f8").tofile(ctx.path(name + ".bin"))
            side = {"shape": list(state.cells.shape), "dtype": "float64", "byteorder": "little", "order": "C",
                    "variables": ["u", "v", "w"], "t": state.t, "frame_speed": state.frame_speed,
                    "x1": [grid.x1[0], grid.x1[-1], grid.nx1], "y": [grid.y[0], grid.y[-1], grid.ny]}
            with open(ctx.path(name + ".json"), "w", encoding="utf-8") as fh:
                fh.write(dumps17(side))
    res = run_experiment(ctx.system, ctx.profile, grid, pert, alpha, beta, times, float(sc["epsilon"]),
                         float(sc["t_min"]), sc["limiter"], float(sc["cfl"]), dump=dump)
    out = {"coefficient_source": source, **res.to_dict()}
    _write_csv(ctx.path("simulation_series.csv"), ["t", "residual_l2", "mass", "centroid_drift", "residual_untracked"],
               res.series_rows())
    gap = res.untracked.exponent - res.tracked.exponent
    a0 = float(np.atleast_1d(alpha)[0])
    checks = {"tracked_exponent": res.tracked.exponent <= -0.55, "control_gap": gap >= 0.15,
              "drift_sign": np.sign(res.drift_speed) == np.sign(a0)}
    out["checks"] = checks
    failed = [k for k, v in checks.items() if not v]
    return ("fail" if failed else "pass"), out, ("failed: " + ", ".join(failed)) if failed else ""


STAGE_FUNCS = {"profile": stage_profile, "hypotheses": stage_hypotheses, "enskog": stage_enskog,
               "evans": stage_evans, "front": stage_front, "simulate": stage_simulate}


# ----------------------------------------------------------------------------- pipeline

def run_pipeline(cfg: dict, stages=None, out_dir: Optional[str] = None, log=None) -> tuple:
    """Run the selected stages (plus prerequisites); returns (report, timings)."""
    out_dir = out_dir or cfg["output"]
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output directory {out_dir!r} is not writable")
    selected = list(cfg["stages"] if stages is None else stages)
    todo = resolve_stages(selected)
    optional = set(cfg["optional_stages"])
    ctx = Context(cfg, out_dir)
    results: dict = {}
    timings: dict = {}
    for name in RUN_ORDER:
        if name not in todo:
            continue
        blocked = [p for p in DEPENDS[name] if results.get(p, {}).get("status") != "pass"]
        blocked += [p for p in SOFT.get(name, ()) if p in results and results[p]["status"] != "pass"]
        if blocked:
            results[name] = {"status": "skipped", "reason": f"{blocked[0]} failed"
                             if results.get(blocked[0], {}).get("status") != "skipped" else f"{blocked[0]} skipped",
                             "results": {}}
        else:
            if log:
                log(f"[{name}] running")
            t0 = time.perf_counter()
            try:
                status, res, reason = STAGE_FUNCS[name](ctx, results)
            except Exception as exc:  # stage errors become statuses
                status, res, reason = "fail", {}, f"{type(exc).__name__}: {exc}"
            timings[name] = time.perf_counter() - t0
            results[name] = {"status": status, "reason": reason, "results": res}
            if log:
                log(f"[{name}] {status} ({timings[name]:.1f} s) {reason}")
        results[name]["optional"] = name in optional
        results[name]["prerequisite_only"] = name not in selected
    required = [n for n, r in results.items() if not r["optional"]]
    ok = all(results[n]["status"] == "pass" for n in required)
    # the output location does not affect results; keep it out of the report
    cfg_rep = {k: v for k, v in cfg.items() if k != "output"}
    report = {
        "schema": REPORT_SCHEMA,
        "config_hash": config_hash(cfg_rep),
        "seed": cfg["seed"],
        "versions": versions(),
        "config": cfg_rep,
        "stages": {n: results[n] for n in RUN_ORDER if n in results},
        "overall": "pass" if ok else "fail",
        "exit_code": 0 if ok else 1,
        "files": sorted(set(ctx.files)),
    }
    report = _plain(report)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(dumps17(report) + "\n")
    with open(os.path.join(out_dir, "timings.json"), "w", encoding="utf-8") as fh:
        fh.write(dumps17({"config_hash": report["config_hash"], "wall_seconds": timings}) + "\n")
    return report, timings


# ----------------------------------------------------------------------------- explain

def _g(x, fmt=".4g"):
    if isinstance(x, dict) and "re" in x:
        return f"{x['re']:{fmt}}{x['im']:+{fmt}}i"
    if isinstance(x, list):
        return "[" + ", ".join(_g(v, fmt) for v in x) + "]"
    return "nan" if x is None else format(x, fmt)


def explain_lines(report: dict) -> list:
    if report.get("schema") != REPORT_SCHEMA or "stages" not in report:
        raise ValueError(f"not a {REPORT_SCHEMA} report")
    st = report["stages"]
    lines = [f"report {report['config_hash'][:12]}  overall: {report['overall'].upper()}"]

    def verdict(name):
        return st[name]["status"].upper()

    def skipped(name, label):
        r = st[name]
        if r["status"] == "skipped":
            lines.append(f"{label}: SKIPPED ({r['reason']})")
            return True
        return False

    if "profile" in st and not skipped("profile", "profile"):
        r = st["profile"]["results"]
        lines.append(f"profile: s = {_g(r.get('s'))}, residual {_g(r.get('residual', float('nan')), '.2e')}"
                     f" — {verdict('profile')}")
    if "hypotheses" in st and not skipped("hypotheses", "H1-H4"):
        r = st["hypotheses"]["results"]
        c = r["checks"]
        pf = lambda b: "PASS" if b else "FAIL"  # noqa: E731
        lines.append(f"H1: real semisimple symbols, sigma(A^1) != s (gap {_g(r['h1_s_separation'])}) — {pf(c['H1'])}")
        lines.append(f"H2: distinct equilibrium speeds (gap {_g(r['h2_distinctness'])}) — {pf(c['H2'])}")
        lines.append(f"H3: Re sigma <= -theta|xi|^2/(1+|xi|^2), theta = {_g(r['h3_theta'])} — {pf(c['H3'])}")
        lines.append(f"H4: genuine coupling — {pf(c['H4'])}")
        lines.append(f"Kawashima compensator: theta = {_g(r['kawashima_theta'])} — {pf(c['kawashima'])}")
    if "enskog" in st and not skipped("enskog", "enskog"):
        r = st["enskog"]["results"]
        for p in r["points"]:
            lines.append(f"enskog u={_g(p['u'])}: a* = {_g(p['a_fit'])}, B* = {_g(p['B_fit'])} — "
                         f"{'PASS' if p['positive_definite'] else 'FAIL'}")
            if p["discrepancy_flag"]:
                lines.append(f"  closed-form b* = {_g(p['b_star_formula'])} differs from the dispersion fit "
                             f"{_g(p['B_fit'])}; the dispersion fit (exact root expansion) is used downstream")
    if "evans" in st:
        r = st["evans"]
        if r["status"] == "skipped":
            lines.append(f"D1–D3: SKIPPED ({r['reason']})")
        else:
            e = r["results"]
            w = e.get("winding", [])
            ok1 = bool(w) and all(x["winding"] == 0 for x in w)
            wv = sorted({x["winding"] for x in w}, key=str)
            lines.append(f"D1: winding {_g(wv[0], '') if len(wv) == 1 else wv} on {{Re λ ≥ 0}}\\{{0}} — "
                         f"{'PASS' if ok1 else ('INCONCLUSIVE' if any(x['winding'] is None for x in w) else 'FAIL')}")
            sc = e.get("small_circle", {})
            der = e.get("dD_dlambda", {})
            ok2 = sc.get("winding") == 1 and der.get("relative_change", 1) < 0.01
            lines.append(f"D2: simple zero at λ=0 (small-circle winding {sc.get('winding')}, |D'(0)| = "
                         f"{_g(der.get('abs'))}) — {'PASS' if ok2 else 'FAIL'}")
            lf = e.get("low_frequency")
            if lf:
                ok3 = lf["status"] == "ok" and lf["theta"] > 0 and lf["beta_positive_definite"]
                lines.append(f"D3: λ*(ξ) = -iα·ξ - ξβξ, α = {_g(lf['alpha_tilde'])}, β = {_g(lf['beta_tilde'])}, "
                             f"θ = {_g(lf['theta'])} — {'PASS' if ok3 else 'FAIL'}")
                lines.append(f"  a-bar printed sign {_g(lf['abar_printed'])} vs Rankine–Hugoniot sign "
                             f"{_g(lf['abar_rh'])}; the fitted α is used")
            rs = e.get("resolvent_summary")
            if rs:
                lines.append(f"resolvent: jump {_g(rs['max_jump'], '.1e')}, M-constancy {_g(rs['max_m'], '.1e')}, "
                             f"min decay rate {_g(rs['min_rate'])}")
            if r["reason"]:
                lines.append(f"  evans: {r['status'].upper()} — {r['reason']}")
    if "front" in st and not skipped("front", "front"):
        r = st["front"]["results"]
        if r:
            lines.append(f"front model (source {r['source']}): L2 exponent {_g(r['exponent_l2'])}, gradient "
                         f"{_g(r['exponent_grad'])}, mollifier {_g(r['mollifier_exponents'])} — {verdict('front')}")
        else:
            lines.append(f"front: {verdict('front')} ({st['front']['reason']})")
    if "simulate" in st and not skipped("simulate", "nonlinear simulation"):
        r = st["simulate"]["results"]
        if "tracked" in r:
            lines.append(f"nonlinear stability: tracked exponent {_g(r['tracked']['exponent'])} "
                         f"± {_g(r['tracked']['ci_half_width'], '.2g')}, control {_g(r['untracked']['exponent'])}, "
                         f"drift {_g(r['drift_speed'])} — {verdict('simulate')}")
        else:
            lines.append(f"nonlinear stability: {verdict('simulate')} ({st['simulate']['reason']})")
    return lines


# ----------------------------------------------------------------------------- entry point

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relaxshock", description="Multi-d relaxation shock stability pipeline")
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides config 'output')")
    common.add_argument("--seed", type=int, metavar="N", help="seed for randomized searches (overrides config)")
    common.add_argument("--threads", type=int, metavar="N", help="thread count for numba/BLAS")
    common.add_argument("--quiet", action="store_true", help="suppress progress lines")
    sub = p.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage (and its prerequisites)")
    sub.add_parser("pipeline", parents=[common], help="run the stages selected in the config")
    ex = sub.add_parser("explain", help="summarize a report")
    ex.add_argument("report", help="path to report.json")
    return p


def _set_threads(n: Optional[int]) -> None:
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    import numba
    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "explain":
        try:
            with open(args.report, "r", encoding="utf-8") as fh:
                rep = json.load(fh)
            print("\n".join(explain_lines(rep)))
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        return 0
    if not args.config:
        print("error: --config PATH is required", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out:
        cfg["output"] = args.out
    _set_threads(args.threads)
    stages = None if args.command == "pipeline" else [args.command]
    log = None if args.quiet else (lambda m: print(m, file=sys.stderr, flush=True))
    report, _ = run_pipeline(cfg, stages, cfg["output"], log)
    if not args.quiet:
        print("\n".join(explain_lines(report)))
    return int(report["exit_code"])


if __name__ == "__main__":
    sys.exit(main())
