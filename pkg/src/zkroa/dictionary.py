"""Observable dictionaries.

Every family indexes its basis by an integer frequency vector ``k`` drawn
from the symmetric set {-(N-1), ..., N-1}^dim, enumerated in lexicographic
order (last axis fastest). With ``c`` the centre (the equilibrium), phase
``theta_k(x) = 2*pi * k . (x - c) / P`` and envelope
``g(x) = exp(-|x - c|^2 / G)`` (``g = 1`` when ``gauss_scale`` is None):

* ``cos_gauss_1d`` / ``cos_gauss_nd``: ``z_k(x) = cos(theta_k(x)) g(x)``
* ``complex_fourier_nd``:              ``z_k(x) = exp(i theta_k(x)) g(x)``

Gradients:

* cos:     ``dz_k/dx_d = (-(2 pi k_d / P) sin(theta_k) - 2 (x_d - c_d) / G cos(theta_k)) g``
* complex: ``dz_k/dx_d = (i 2 pi k_d / P - 2 (x_d - c_d) / G) z_k``

Since cos is even, ``k`` and ``-k`` give the same cosine function; the
duplicated columns are kept (the least-squares fit handles rank deficiency)
so basis counts match the symmetric index set, (2N-1)^dim. A complex
period of 12 reproduces the ``exp(i pi/6 k.x)`` basis.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError

FAMILIES = ("cos_gauss_1d", "cos_gauss_nd", "complex_fourier_nd")

# Rows per evaluation chunk are chosen so chunk * size stays near this.
_CHUNK_ENTRIES = 1 << 22


@dataclass(frozen=True)
class Dictionary:
    family: str
    freq_count: int
    period_scale: float
    gauss_scale: Optional[float]
    dim: int
    center: tuple = field(default=())

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown dictionary family {self.family!r}")
        if self.family == "cos_gauss_1d" and self.dim != 1:
            raise ConfigError("cos_gauss_1d requires a one-dimensional state")
        if self.freq_count < 1:
            raise ConfigError("freq_count must be positive")
        if not self.period_scale > 0:
            raise ConfigError("period_scale must be positive")
        if self.gauss_scale is not None and not self.gauss_scale > 0:
            raise ConfigError("gauss_scale must be positive or None")
        center = tuple(float(c) for c in (self.center or (0.0,) * self.dim))
        if len(center) != self.dim:
            raise ConfigError("center has the wrong dimension")
        object.__setattr__(self, "center", center)
        r = range(-(self.freq_count - 1), self.freq_count)
        freqs = np.array(list(itertools.product(r, repeat=self.dim)), dtype=float)
        object.__setattr__(self, "_freqs", freqs.reshape(-1, self.dim))

    @property
    def complex_valued(self) -> bool:
        return self.family == "complex_fourier_nd"

    @property
    def size(self) -> int:
        return (2 * self.freq_count - 1) ** self.dim

    @property
    def frequencies(self) -> np.ndarray:
        return self._freqs

    def descriptor(self) -> dict:
        return {
            "family": self.family,
            "freq_count": self.freq_count,
            "period_scale": self.period_scale,
            "gauss_scale": self.gauss_scale,
            "dim": self.dim,
            "center": list(self.center),
        }

    @classmethod
    def from_descriptor(cls, d) -> "Dictionary":
        if isinstance(d, str):
            d = json.loads(d)
        return cls(
            family=d["family"],
            freq_count=int(d["freq_count"]),
            period_scale=float(d["period_scale"]),
            gauss_scale=None if d.get("gauss_scale") is None else float(d["gauss_scale"]),
            dim=int(d["dim"]),
            center=tuple(d.get("center") or ()),
        )

    # ------------------------------------------------------------ evaluation

    def _prep(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if x.shape[-1] != self.dim:
            raise ValueError(f"state dimension {x.shape[-1]} != {self.dim}")
        lead = x.shape[:-1]
        return x.reshape(-1, self.dim) - np.asarray(self.center), lead

    def _envelope(self, d):
        if self.gauss_scale is None:
            return np.ones(d.shape[0])
        return np.exp(-np.sum(d * d, axis=1) / self.gauss_scale)

    def _phase(self, d):
        return (2.0 * np.pi / self.period_scale) * (d @ self._freqs.T)

    def _chunks(self, m):
        step = max(1, _CHUNK_ENTRIES // max(self.size, 1))
        return [(a, min(a + step, m)) for a in range(0, m, step)]

    def eval(self, x) -> np.ndarray:
        """Basis values, shape ``x.shape[:-1] + (size,)``, complex."""
        d, lead = self._prep(x)
        out = np.empty((d.shape[0], self.size), dtype=complex)
        for a, b in self._chunks(d.shape[0]):
            th = self._phase(d[a:b])
            g = self._envelope(d[a:b])[:, None]
            if self.complex_valued:
                out[a:b] = np.exp(1j * th) * g
            else:
                out[a:b] = np.cos(th) * g
        return out.reshape(lead + (self.size,))

    def grad(self, x) -> np.ndarray:
        """Partial derivatives, shape ``x.shape[:-1] + (size, dim)``."""
        d, lead = self._prep(x)
        w = 2.0 * np.pi / self.period_scale
        inv_g = 0.0 if self.gauss_scale is None else 2.0 / self.gauss_scale
        th = self._phase(d)
        g = self._envelope(d)[:, None, None]
        kd = w * self._freqs[None, :, :]
        dd = inv_g * d[:, None, :]
        if self.complex_valued:
            z = np.exp(1j * th)[:, :, None]
            out = (1j * kd - dd) * z * g
        else:
            out = (-kd * np.sin(th)[:, :, None] - dd * np.cos(th)[:, :, None]) * g
        return out.astype(complex).reshape(lead + (self.size, self.dim))

    def combine(self, coeffs, x) -> np.ndarray:
        """sum_k coeffs[k] z_k(x) without materialising more than a chunk."""
        coeffs = np.asarray(coeffs, dtype=complex)
        d, lead = self._prep(x)
        out = np.empty(d.shape[0], dtype=complex)
        for a, b in self._chunks(d.shape[0]):
            th = self._phase(d[a:b])
            g = self._envelope(d[a:b])
            basis = np.exp(1j * th) if self.complex_valued else np.cos(th)
            out[a:b] = (basis @ coeffs) * g
        return out.reshape(lead)

    def combine_grad(self, coeffs, x) -> np.ndarray:
        """Gradient of sum_k coeffs[k] z_k(x), shape ``x.shape[:-1] + (dim,)``."""
        coeffs = np.asarray(coeffs, dtype=complex)
        d, lead = self._prep(x)
        w = 2.0 * np.pi / self.period_scale
        inv_g = 0.0 if self.gauss_scale is None else 2.0 / self.gauss_scale
        kc = self._freqs * coeffs[:, None]  # (size, dim)
        out = np.empty((d.shape[0], self.dim), dtype=complex)
        for a, b in self._chunks(d.shape[0]):
            th = self._phase(d[a:b])
            g = self._envelope(d[a:b])[:, None]
            if self.complex_valued:
                z = np.exp(1j * th)
                val = z @ coeffs
                out[a:b] = (1j * w * (z @ kc) - inv_g * d[a:b] * val[:, None]) * g
            else:
                val = np.cos(th) @ coeffs
                out[a:b] = (-w * (np.sin(th) @ kc) - inv_g * d[a:b] * val[:, None]) * g
        return out.reshape(lead + (self.dim,))

    def unit_index(self, x_eq=None) -> int:
        """Index of the zero-frequency element, equal to 1 at the centre."""
        idx = int(np.flatnonzero(np.all(self._freqs == 0, axis=1))[0])
        if x_eq is not None:
            val = self.eval(np.atleast_1d(np.asarray(x_eq, dtype=float)))[idx]
            if abs(val - 1.0) > 1e-12:
                raise ConfigError(
                    f"unit element equals {val} at the equilibrium; centre the dictionary there"
                )
        return idx


def make_dictionary(family: str, freq_count: int, dim: int, period_scale=None,
                    gauss_scale="default", center=None) -> Dictionary:
    """Construct a dictionary with the family's usual scales filled in."""
    if period_scale is None:
        period_scale = 12.0 if family == "complex_fourier_nd" else 3.0
    if gauss_scale == "default":
        gauss_scale = None if family == "complex_fourier_nd" else 4.0
    return Dictionary(
        family=family,
        freq_count=int(freq_count),
        period_scale=float(period_scale),
        gauss_scale=None if gauss_scale is None else float(gauss_scale),
        dim=int(dim),
        center=tuple(center) if center is not None else (),
    )
