"""Dynamical systems and the built-in benchmark problems.

Vector fields and weights are vectorised: ``field`` maps an array of shape
``(..., n)`` to ``(..., n)`` and ``eta`` maps ``(..., n)`` to ``(...)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .errors import ConfigError

__all__ = [
    "SystemSpec",
    "BENCHMARK_IDS",
    "builtin",
    "normalize_id",
    "power_weight",
    "closed_form_u_1d",
    "closed_form_v_1d",
]


@dataclass(frozen=True)
class SystemSpec:
    dim: int
    field: Callable[[np.ndarray], np.ndarray]
    eta: Callable[[np.ndarray], np.ndarray]
    x_eq: np.ndarray
    region: np.ndarray  # shape (dim, 2): per-axis [lo, hi]
    name: str
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        x_eq = np.atleast_1d(np.asarray(self.x_eq, dtype=float))
        region = np.asarray(self.region, dtype=float).reshape(self.dim, 2)
        object.__setattr__(self, "x_eq", x_eq)
        object.__setattr__(self, "region", region)
        if x_eq.shape != (self.dim,):
            raise ConfigError(f"x_eq has shape {x_eq.shape}, expected ({self.dim},)")
        if np.any(region[:, 0] >= region[:, 1]):
            raise ConfigError(f"empty region {region.tolist()}")

    @property
    def lo(self) -> np.ndarray:
        return self.region[:, 0]

    @property
    def hi(self) -> np.ndarray:
        return self.region[:, 1]

    def contains(self, x) -> np.ndarray:
        """Closed-box membership, vectorised over leading axes."""
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)

    def validate(self, n_check: int = 256, seed: int = 0) -> None:
        """Check the equilibrium and weight hypotheses; raise ConfigError on failure."""
        if not np.all(self.contains(self.x_eq)) or np.any(
            (self.x_eq <= self.lo) | (self.x_eq >= self.hi)
        ):
            raise ConfigError(f"{self.name}: x_eq must lie strictly inside the region")
        if np.linalg.norm(self.field(self.x_eq)) > 1e-9:
            raise ConfigError(f"{self.name}: |f(x_eq)| exceeds 1e-9")
        if abs(float(self.eta(self.x_eq))) != 0.0:
            raise ConfigError(f"{self.name}: eta(x_eq) must be 0")
        rng = np.random.default_rng(seed)
        pts = rng.uniform(self.lo, self.hi, size=(n_check, self.dim))
        if np.any(self.eta(pts) < 0):
            raise ConfigError(f"{self.name}: eta takes negative values")


def power_weight(x_eq, scale: float, power: float) -> Callable[[np.ndarray], np.ndarray]:
    """eta(x) = scale * |x - x_eq|**power (Euclidean norm)."""
    x_eq = np.atleast_1d(np.asarray(x_eq, dtype=float))

    def eta(x):
        d = np.asarray(x, dtype=float) - x_eq
        if power == 2:
            return scale * np.sum(d * d, axis=-1)
        return scale * np.linalg.norm(d, axis=-1) ** power

    return eta


# ---------------------------------------------------------------- vector fields

def _cubic1d(x):
    return -x + x**3


def _vdp_reversed(mu):
    def f(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([-x2, x1 - mu * (1.0 - x1 * x1) * x2], axis=-1)

    return f


def _polynomial(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x2, -2.0 * x1 + x1**3 / 3.0 - x2], axis=-1)


def _power2m(delta):
    s = math.sin(delta)

    def f(x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([x2, -0.5 * x2 - (np.sin(x1 + delta) - s)], axis=-1)

    return f


def _sys3d(x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack(
        [x2 + 2.0 * x2 * x3, x3, -0.5 * x1 - 2.0 * x2 - x3], axis=-1
    )


def _stiff2(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack(
        [-2.0 * x1 + x1 * x1 - x2 * x2, -2.5 * x2 + 2.0 * x1 * x2], axis=-1
    )


# (default region, default eta scale, default eta power)
_DEFAULTS = {
    "cubic1d": ([[-1.5, 1.5]], 1.0, 1),
    "vdp_reversed": ([[-3.0, 3.0], [-3.0, 3.0]], 0.2, 2),
    "polynomial": ([[-6.0, 6.0], [-6.0, 6.0]], 0.2, 2),
    "power2m": ([[-2.0, 3.0], [-3.0, 2.0]], 0.2, 2),
    "sys3d": ([[-2.0, 2.0]] * 3, 0.2, 2),
    "stiff_vdp": ([[-3.0, 3.0], [-8.0, 8.0]], 0.2, 2),
    "stiff2": ([[-4.0, 4.0], [-4.0, 4.0]], 0.2, 2),
}

BENCHMARK_IDS = tuple(_DEFAULTS)


def normalize_id(name: str) -> tuple[str, dict]:
    """Map a CLI-style id such as ``vdp-reversed`` or ``stiff-vdp-6`` to
    the canonical id plus any parameters embedded in the name."""
    key = name.strip().lower().replace("-", "_")
    if key.startswith("stiff_vdp_"):
        try:
            return "stiff_vdp", {"mu": float(key[len("stiff_vdp_"):])}
        except ValueError:
            pass
    if key not in _DEFAULTS:
        raise ConfigError(
            f"unknown system {name!r}; known: {', '.join(i.replace('_', '-') for i in BENCHMARK_IDS)}"
        )
    return key, {}


def builtin(name: str, **overrides) -> SystemSpec:
    """Return a benchmark system.

    Recognised overrides: ``region`` (list of [lo, hi] pairs), ``eta_scale``,
    ``eta_power``, ``mu`` (stiff_vdp only, default 4), ``delta`` (power2m).
    """
    key, embedded = normalize_id(name)
    params = {**embedded, **overrides}
    region, scale, power = _DEFAULTS[key]
    region = params.pop("region", region)
    scale = float(params.pop("eta_scale", scale))
    power = float(params.pop("eta_power", power))

    if key == "cubic1d":
        dim, f = 1, _cubic1d
    elif key == "vdp_reversed":
        dim, f = 2, _vdp_reversed(1.0)
    elif key == "polynomial":
        dim, f = 2, _polynomial
    elif key == "power2m":
        dim, f = 2, _power2m(float(params.setdefault("delta", math.pi / 3)))
    elif key == "sys3d":
        dim, f = 3, _sys3d
    elif key == "stiff_vdp":
        dim, f = 2, _vdp_reversed(float(params.setdefault("mu", 4.0)))
    else:
        dim, f = 2, _stiff2

    unknown = set(params) - {"mu", "delta"}
    if unknown:
        raise ConfigError(f"unknown override(s) for {key}: {sorted(unknown)}")

    x_eq = np.zeros(dim)
    spec = SystemSpec(
        dim=dim,
        field=f,
        eta=power_weight(x_eq, scale, power),
        x_eq=x_eq,
        region=np.asarray(region, dtype=float),
        name=key,
        params={"eta_scale": scale, "eta_power": power, **params},
    )
    spec.validate()
    return spec


def closed_form_u_1d(x):
    """Exact bounded solution of the dual equation for x' = -x + x^3, eta = |x|."""
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    inside = a < 1.0
    safe = np.where(inside, a, 0.0)
    out = np.where(inside, np.sqrt((1.0 - safe) / (1.0 + safe)), 0.0)
    return out if out.ndim else float(out)


def closed_form_v_1d(x):
    """Maximal Lyapunov function for the same system; +inf for |x| >= 1."""
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    inside = a < 1.0
    safe = np.where(inside, a, 0.0)
    out = np.where(inside, 0.5 * np.log((1.0 + safe) / (1.0 - safe)), np.inf)
    return out if out.ndim else float(out)
