"""Run configuration: JSON document with defaults, dotted-key overrides and validation."""

import copy
import json
import os
from pathlib import Path

import numpy as np

from .errors import ConfigError

DEFAULTS = {
    "model": {
        "source": "radial_sphere",
        "alpha": 1e-3,
        "sigma_star": 1e6,
        "mu_r": 32.0,
        "order_p": 3,
        "grading": {"scheme": "geometric_increasing", "L": 2, "omega_target": 1e8},
        "outer_radius": 1000.0,
        "n_interior": 8,
        "n_exterior": 24,
        "manifest": None,
    },
    "sweep": {
        "omega_min": 1e1,
        "omega_max": 1e8,
        "n_snapshots": 13,
        "n_output": 160,
        "spacing": "log",
    },
    "tolerances": {"tol_sigma": 1e-6, "tol_delta": 1e-3, "rel_tol": 1e-8, "epsilon": 1e-10},
    "method": "MM",
    "solutions": "podp",
    "certify": False,
    "certificate": {"norm": "primal", "alpha_lb": None, "n_probes": 5},
    "adapt": {
        "n_star": 2,
        "max_k": 4,
        "theta": None,
        "normalization": "physical_volume",
        "window": None,
    },
    "oracle": {"abs_floor": 1e-12},
    "convergence": {
        "mu_r": [1.0, 16.0, 64.0],
        "schemes": ["uniform", "geometric_decreasing", "geometric_increasing"],
        "L": [1, 2, 3],
        "orders": [1, 2, 3, 4],
        "omegas": None,
    },
    "output_dir": "mptrom_out",
    "parallel": 1,
}


def _merge(base, override, prefix=""):
    for key, val in override.items():
        if key not in base:
            raise ConfigError(f"unknown configuration key '{prefix}{key}'")
        if isinstance(base[key], dict) and isinstance(val, dict):
            _merge(base[key], val, f"{prefix}{key}.")
        else:
            base[key] = val
    return base


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg, assignment):
    """Apply ``"a.b.c=value"``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown configuration key '{key}'")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown configuration key '{key}'")
    node[parts[-1]] = _parse_value(text)


def load_config(path=None, overrides=(), env=None):
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        _merge(cfg, doc)
    for ov in overrides:
        apply_override(cfg, ov)
    env = os.environ if env is None else env
    if env.get("MPTROM_THREADS"):
        try:
            cfg["parallel"] = int(env["MPTROM_THREADS"])
        except ValueError:
            raise ConfigError("MPTROM_THREADS must be an integer") from None
    validate(cfg)
    return cfg


def _require(cond, key, msg):
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def _number(cfg, section, key):
    val = cfg[section][key]
    _require(isinstance(val, (int, float)) and not isinstance(val, bool), f"{section}.{key}", "must be a number")
    return val


def validate(cfg):
    m = cfg["model"]
    _require(m["source"] in ("radial_sphere", "manifest"), "model.source", "must be radial_sphere or manifest")
    if m["source"] == "manifest":
        _require(bool(m["manifest"]), "model.manifest", "path required for manifest models")
    else:
        for k in ("alpha", "sigma_star", "mu_r", "outer_radius"):
            _require(_number(cfg, "model", k) > 0, f"model.{k}", "must be positive")
        for k in ("order_p", "n_interior", "n_exterior"):
            _require(isinstance(m[k], int) and m[k] >= 1, f"model.{k}", "must be a positive integer")
        g = m["grading"]
        _require(
            g.get("scheme") in ("uniform", "geometric_decreasing", "geometric_increasing"),
            "model.grading.scheme",
            "unknown scheme",
        )
        _require(isinstance(g.get("L"), int) and g["L"] >= 1, "model.grading.L", "must be a positive integer")
        _require(
            isinstance(g.get("omega_target"), (int, float)) and g["omega_target"] > 0,
            "model.grading.omega_target",
            "must be positive",
        )
    s = cfg["sweep"]
    lo, hi = _number(cfg, "sweep", "omega_min"), _number(cfg, "sweep", "omega_max")
    _require(lo > 0, "sweep.omega_min", "must be positive")
    _require(lo < hi, "sweep.omega_max", "must exceed sweep.omega_min")
    _require(s["spacing"] == "log", "sweep.spacing", "only 'log' is supported")
    _require(isinstance(s["n_output"], int) and s["n_output"] >= 1, "sweep.n_output", "frequency list is empty")
    _require(isinstance(s["n_snapshots"], int) and s["n_snapshots"] >= 1, "sweep.n_snapshots", "must be >= 1")
    _require(s["n_output"] >= s["n_snapshots"], "sweep.n_output", "must be >= sweep.n_snapshots")
    t = cfg["tolerances"]
    _require(0 < _number(cfg, "tolerances", "tol_sigma") < 1, "tolerances.tol_sigma", "must lie in (0, 1)")
    _require(_number(cfg, "tolerances", "tol_delta") > 0, "tolerances.tol_delta", "must be positive")
    _require(0 < _number(cfg, "tolerances", "rel_tol") < 1, "tolerances.rel_tol", "must lie in (0, 1)")
    _require(_number(cfg, "tolerances", "epsilon") > 0, "tolerances.epsilon", "must be positive")
    del t
    _require(cfg["method"] in ("IM", "FMM", "MM"), "method", "must be IM, FMM or MM")
    _require(cfg["solutions"] in ("podp", "full"), "solutions", "must be podp or full")
    _require(
        not (cfg["method"] == "MM" and cfg["solutions"] == "full"),
        "method",
        "MM requires solutions = podp",
    )
    _require(cfg["certificate"]["norm"] in ("primal", "dual"), "certificate.norm", "must be primal or dual")
    a = cfg["adapt"]
    _require(isinstance(a["n_star"], int) and a["n_star"] >= 1, "adapt.n_star", "must be >= 1")
    _require(isinstance(a["max_k"], int) and a["max_k"] > 1, "adapt.max_k", "must be > 1")
    _require(isinstance(cfg["parallel"], int) and cfg["parallel"] >= 1, "parallel", "must be >= 1")


def output_frequencies(cfg):
    s = cfg["sweep"]
    return np.geomspace(s["omega_min"], s["omega_max"], s["n_output"])


def snapshot_frequencies(cfg):
    s = cfg["sweep"]
    return np.geomspace(s["omega_min"], s["omega_max"], s["n_snapshots"])


def dump(cfg):
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"
