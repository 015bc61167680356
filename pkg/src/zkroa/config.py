"""Run configuration: a JSON document merged over defaults, then over CLI flags.

Schema (every key optional; defaults reproduce the 1D cubic example at
reduced scale)::

    {
      "system":     {"id": "cubic1d", "overrides": {}},
      "dt": 1.0,
      "steps": 1001,
      "sampling":   {"kind": "grid", "per_axis": [1001], "count": 1000, "seed": 0},
      "dictionary": {"family": "cos_gauss_1d", "freq_count": 128,
                     "period_scale": 3.0, "gauss_scale": 4.0},
      "svd_tol": 1e-12,
      "iteration":  {"tol": 0.01, "K": 10, "mode": "matrix"},
      "roa":        {"resolution": [601], "threshold": 0.001, "floor": 1e-12,
                     "exclusion_radius": 0.05, "margin": 0.0},
      "smooth":     {"enabled": false, "widths": [15, 15], "epochs": 300,
                     "mse_tol": 1e-8, "lr": 0.01, "momentum": 0.9, "seed": 0,
                     "per_axis": [301]},
      "spectrum_top_k": 3,
      "output": "zk_out"
    }

``per_axis`` and ``resolution`` may also be a single integer applied to
every axis. ``gauss_scale`` may be null (no envelope).
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigError

DEFAULTS = {
    "system": {"id": "cubic1d", "overrides": {}},
    "dt": 1.0,
    "steps": 1001,
    "sampling": {"kind": "grid", "per_axis": [1001], "count": 1000, "seed": 0},
    "dictionary": {
        "family": "cos_gauss_1d",
        "freq_count": 128,
        "period_scale": 3.0,
        "gauss_scale": 4.0,
    },
    "svd_tol": 1e-12,
    "iteration": {"tol": 1e-2, "K": 10, "mode": "matrix"},
    "roa": {
        "resolution": [601],
        "threshold": 1e-3,
        "floor": 1e-12,
        "exclusion_radius": 0.05,
        "margin": 0.0,
    },
    "smooth": {
        "enabled": False,
        "widths": [15, 15],
        "epochs": 300,
        "mse_tol": 1e-8,
        "lr": 1e-2,
        "momentum": 0.9,
        "seed": 0,
        "per_axis": [301],
    },
    "spectrum_top_k": 3,
    "output": "zk_out",
}

# Canned benchmark runs sized for a single workstation.
BENCHMARKS = {
    "cubic1d": {},
    "vdp_reversed": {
        "system": {"id": "vdp_reversed"},
        "dt": 1.5,
        "sampling": {"per_axis": [60, 60]},
        "dictionary": {"family": "cos_gauss_nd", "freq_count": 15,
                       "period_scale": 6.0, "gauss_scale": 4.0},
        "iteration": {"K": 8},
        "roa": {"resolution": [200, 200], "exclusion_radius": 0.1},
    },
    "polynomial": {
        "system": {"id": "polynomial"},
        "dt": 2.0,
        "sampling": {"per_axis": [60, 60]},
        "dictionary": {"family": "cos_gauss_nd", "freq_count": 15,
                       "period_scale": 12.0, "gauss_scale": 25.0},
        "iteration": {"K": 8},
        "roa": {"resolution": [200, 200], "exclusion_radius": 0.2},
    },
    "power2m": {
        "system": {"id": "power2m"},
        "dt": 2.0,
        "sampling": {"per_axis": [50, 50]},
        "dictionary": {"family": "complex_fourier_nd", "freq_count": 10,
                       "period_scale": 12.0, "gauss_scale": None},
        "iteration": {"K": 8},
        "roa": {"resolution": [150, 150], "exclusion_radius": 0.1},
    },
    "sys3d": {
        "system": {"id": "sys3d"},
        "dt": 2.0,
        "sampling": {"per_axis": [20, 20, 20]},
        "dictionary": {"family": "complex_fourier_nd", "freq_count": 4,
                       "period_scale": 12.0, "gauss_scale": None},
        "iteration": {"K": 8},
        "roa": {"resolution": [40, 40, 40], "threshold": 0.2, "exclusion_radius": 0.2},
    },
    "stiff_vdp": {
        "system": {"id": "stiff_vdp", "overrides": {"mu": 4.0}},
        "dt": 1.5,
        "steps": 1501,
        "sampling": {"per_axis": [60, 60]},
        "dictionary": {"family": "cos_gauss_nd", "freq_count": 15,
                       "period_scale": 16.0, "gauss_scale": 16.0},
        "iteration": {"K": 8},
        "roa": {"resolution": [200, 200], "exclusion_radius": 0.2},
    },
    "stiff2": {
        "system": {"id": "stiff2"},
        "dt": 1.0,
        "sampling": {"per_axis": [60, 60]},
        "dictionary": {"family": "complex_fourier_nd", "freq_count": 12,
                       "period_scale": 16.0, "gauss_scale": None},
        "iteration": {"K": 8},
        "roa": {"resolution": [200, 200], "exclusion_radius": 0.2},
    },
}


def merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in (extra or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _check_keys(cfg: dict, ref: dict, path: str = "") -> None:
    for key, val in cfg.items():
        if key not in ref:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(ref[key], dict) and key != "overrides":
            if not isinstance(val, dict):
                raise ConfigError(f"config key {path + key!r} must be an object")
            _check_keys(val, ref[key], path + key + ".")


def _per_axis(value, dim: int, name: str) -> list:
    if isinstance(value, int):
        return [value] * dim
    value = [int(v) for v in value]
    if len(value) == 1 and dim > 1:
        value = value * dim
    if len(value) != dim:
        raise ConfigError(f"{name} needs {dim} entries, got {len(value)}")
    return value


def benchmark_config(name: str) -> dict:
    from .systems import normalize_id

    key, embedded = normalize_id(name)
    cfg = merge(DEFAULTS, BENCHMARKS[key])
    if embedded:
        cfg["system"]["overrides"] = {**cfg["system"].get("overrides", {}), **embedded}
    return cfg


def load_config(path=None, overrides: dict | None = None, base: dict | None = None) -> dict:
    """Defaults < ``base`` < file < ``overrides``; returns a validated dict."""
    cfg = copy.deepcopy(base if base is not None else DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        _check_keys(data, DEFAULTS)
        cfg = merge(cfg, data)
    if overrides:
        _check_keys(overrides, DEFAULTS)
        cfg = merge(cfg, overrides)
    return validate(cfg)


def validate(cfg: dict) -> dict:
    from .systems import builtin

    _check_keys(cfg, DEFAULTS)
    cfg = merge(DEFAULTS, cfg)
    sys = builtin(cfg["system"]["id"], **cfg["system"].get("overrides", {}))
    dim = sys.dim
    if not cfg["dt"] > 0:
        raise ConfigError("dt must be positive")
    if int(cfg["steps"]) < 2:
        raise ConfigError("steps must be at least 2")
    s = cfg["sampling"]
    if s["kind"] not in ("grid", "random"):
        raise ConfigError("sampling.kind must be 'grid' or 'random'")
    s["per_axis"] = _per_axis(s["per_axis"], dim, "sampling.per_axis")
    cfg["roa"]["resolution"] = _per_axis(cfg["roa"]["resolution"], dim, "roa.resolution")
    cfg["smooth"]["per_axis"] = _per_axis(cfg["smooth"]["per_axis"], dim, "smooth.per_axis")
    it = cfg["iteration"]
    if not it["tol"] > 0 or int(it["K"]) < 1:
        raise ConfigError("iteration needs tol > 0 and K >= 1")
    if it["mode"] not in ("matrix", "vector"):
        raise ConfigError("iteration.mode must be 'matrix' or 'vector'")
    if not cfg["roa"]["threshold"] > 0:
        raise ConfigError("roa.threshold must be positive")
    d = cfg["dictionary"]
    if d["family"] == "cos_gauss_1d" and dim != 1:
        raise ConfigError("cos_gauss_1d needs a one-dimensional system; use cos_gauss_nd")
    return cfg
