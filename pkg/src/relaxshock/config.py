"""Strict YAML run configuration.

Physical parameters (model, endpoints) have no defaults; numerical knobs
have documented defaults.  Unknown keys are rejected with the offending
key path and its line number.
"""
from __future__ import annotations

import copy
import hashlib
import json
from typing import Optional

import yaml

STAGES = ("hypotheses", "profile", "enskog", "evans", "front", "simulate")
# hard prerequisites; SOFT ones are used when selected and block dependents if they fail
DEPENDS = {"hypotheses": (), "profile": (), "enskog": (), "evans": ("profile",),
           "front": (), "simulate": ("profile",)}
SOFT = {"front": ("evans",), "simulate": ("evans",)}


class ConfigError(ValueError):
    pass


_REQUIRED = object()

# numerical defaults; None means "derived at run time"
SCHEMA: dict = {
    "model": {"name": _REQUIRED, "params": _REQUIRED},
    "endpoints": {"u_minus": _REQUIRED, "u_plus": _REQUIRED},
    "stages": ["hypotheses", "profile"],
    "optional_stages": [],
    "seed": 0,
    "output": "out",
    "hypotheses": {"restarts": 20, "directions": 16},
    "profile": {"L": 200.0, "n": 4001, "tol": 1e-10, "amplitude_factor": 0.3},
    "enskog": {"points": None},
    "evans": {
        "h": 0.05, "L": None,
        "contour": {"radius_min": 1e-2, "radius_max": 10.0, "shift": -1e-4, "n0": 512},
        "xi": [0.0, 0.05, 0.1],
        "small_circle": 1e-3, "cauchy_nodes": 64,
        "track_max": 0.1, "track_n": 10,
        "resolvent": {"points": [[1.0, 0.0], [0.5, 0.5], [0.1, 0.0], [2.0, -1.0], [0.0, 1.0]],
                      "xi": [0.0, 0.05], "y1": 0.3},
    },
    "front": {
        "n": 4096, "width": 4096.0, "sigma": 2.0,
        "t_start": 100.0, "t_stop": 2000.0, "n_times": 12,
        "epsilons": [2.0, 4.0],
        "kernels": None,
    },
    "simulate": {
        "Lx1": 250.0, "W": 128.0, "nx1": 2000, "ny": 256,
        "amplitude": 1e-2, "sigma_x1": 4.0, "sigma_y": 2.0, "shape": "gaussian",
        "epsilon": 2.0, "t_min": 10.0, "t_final": 200.0, "n_times": 16,
        "limiter": "none", "cfl": 0.45, "dump_frames": False,
    },
}

# per-model physical parameter keys (required, optional-with-default)
MODEL_PARAMS = {
    "jin_xin_1d": ({"a", "f"}, {"tau": 1.0}),
    "jin_xin_2d": ({"a", "b", "f1", "f2"}, {"tau": 1.0}),
}
OPEN_KEYS = {("front", "kernels"), ("model", "params")}


def _compose_with_lines(text: str):
    """Load YAML into Python objects plus a {key-path: line} map."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML syntax error: {exc}") from None
    lines: dict = {}

    def walk(n, path):
        if isinstance(n, yaml.MappingNode):
            out = {}
            for k, v in n.value:
                key = k.value
                if key in out:
                    raise ConfigError(f"duplicate key '{'.'.join(path + (key,))}' (line {k.start_mark.line + 1})")
                lines[path + (key,)] = k.start_mark.line + 1
                out[key] = walk(v, path + (key,))
            return out
        if isinstance(n, yaml.SequenceNode):
            return [walk(v, path + (str(i),)) for i, v in enumerate(n.value)]
        return _scalar(n)

    return ({} if node is None else walk(node, ())), lines


def _scalar(n):
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(n, deep=True)
    finally:
        loader.dispose()


def _merge(schema, data, path, lines):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{'.'.join(path) or '<root>'}' must be a mapping")
    out = {}
    for key in data:
        if key not in schema:
            ln = lines.get(path + (key,))
            where = f" (line {ln})" if ln else ""
            raise ConfigError(f"unknown key '{'.'.join(path + (key,))}'{where}")
    for key, default in schema.items():
        p = path + (key,)
        if key in data:
            if isinstance(default, dict) and p not in OPEN_KEYS:
                out[key] = _merge(default, data[key], p, lines)
            else:
                out[key] = data[key]
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key '{'.'.join(p)}'")
        elif isinstance(default, dict) and any(v is _REQUIRED for v in default.values()):
            raise ConfigError(f"missing required key '{'.'.join(p)}'")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _number(cfg, path, lines, positive=False):
    d = cfg
    for k in path:
        d = d[k]
    if isinstance(d, bool) or not isinstance(d, (int, float)):
        ln = lines.get(path)
        raise ConfigError(f"key '{'.'.join(path)}' must be a number" + (f" (line {ln})" if ln else ""))
    if positive and d <= 0:
        raise ConfigError(f"key '{'.'.join(path)}' must be positive")
    return float(d)


def validate(cfg: dict, lines: Optional[dict] = None) -> dict:
    lines = lines or {}
    name = cfg["model"]["name"]
    if name not in MODEL_PARAMS:
        raise ConfigError(f"key 'model.name': unknown model {name!r}; expected one of {sorted(MODEL_PARAMS)}")
    req, opt = MODEL_PARAMS[name]
    params = cfg["model"]["params"]
    if not isinstance(params, dict):
        raise ConfigError("key 'model.params' must be a mapping")
    for k in params:
        if k not in req and k not in opt:
            ln = lines.get(("model", "params", k))
            raise ConfigError(f"unknown key 'model.params.{k}'" + (f" (line {ln})" if ln else ""))
    for k in sorted(req):
        if k not in params:
            raise ConfigError(f"missing required key 'model.params.{k}'")
    for k, v in opt.items():
        params.setdefault(k, v)
    um = _number(cfg, ("endpoints", "u_minus"), lines)
    up = _number(cfg, ("endpoints", "u_plus"), lines)
    if um == up:
        raise ConfigError("key 'endpoints': u_minus and u_plus must differ")
    st = cfg["stages"]
    if not isinstance(st, list) or any(s not in STAGES for s in st):
        raise ConfigError(f"key 'stages' must be a list drawn from {list(STAGES)}")
    if any(s not in STAGES for s in cfg["optional_stages"]):
        raise ConfigError(f"key 'optional_stages' must be drawn from {list(STAGES)}")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigError("key 'seed' must be an integer")
    return cfg


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text)


def parse_config(text: str) -> dict:
    data, lines = _compose_with_lines(text)
    cfg = _merge(SCHEMA, data, (), lines)
    return validate(cfg, lines)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def resolve_stages(selected) -> list:
    """Selected stages plus their prerequisites, in dependency order."""
    need = set()

    def add(s):
        if s in need:
            return
        for p in DEPENDS[s]:
            add(p)
        need.add(s)
    for s in selected:
        add(s)
    return [s for s in STAGES if s in need]
