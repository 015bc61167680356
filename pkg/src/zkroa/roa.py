"""Iterating the learned operator, level-set ROA extraction and grid
Lyapunov checks.

Anything with ``value(x)`` (and ``grad(x)`` for Lie derivatives) taking a
batch of states of shape (M, dim) can be used as a field here: ``UApprox``,
``smooth.SmoothModel`` or ``FunctionField``.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dictionary import Dictionary
from .edmd import OperatorMatrix, matrix_power_step
from .errors import DivergenceError, DomainError, SeedBelowThresholdError
from .systems import SystemSpec

U_MAGIC = "# zkroa u-approx v1"
DIVERGENCE_LIMIT = 1e6


@dataclass
class UApprox:
    dictionary: Dictionary
    coeffs: np.ndarray
    iterations: int
    final_residual: float
    residuals: list = field(default_factory=list)
    mode: str = "matrix"
    meta: dict = field(default_factory=dict)

    def complex_value(self, x) -> np.ndarray:
        return self.dictionary.combine(self.coeffs, x)

    def value(self, x) -> np.ndarray:
        return self.complex_value(x).real

    def grad(self, x) -> np.ndarray:
        return self.dictionary.combine_grad(self.coeffs, x).real


@dataclass
class FunctionField:
    """Adapter for plain callables, e.g. a closed-form solution."""
    func: Callable
    grad_func: Optional[Callable] = None

    def value(self, x):
        return np.asarray(self.func(x), dtype=float)

    def grad(self, x):
        if self.grad_func is None:
            raise NotImplementedError("no gradient supplied")
        return np.asarray(self.grad_func(x), dtype=float)


def _as_value(u) -> Callable:
    return u.value if hasattr(u, "value") else u


def build_u_zk(T, dictionary: Dictionary, x_eq, tol: float, K: int,
               mode: str = "matrix") -> UApprox:
    """Iterate T until the step difference drops to ``tol`` or k reaches K.

    Matrix mode tracks ||T^k - T^(k-1)||_F; vector mode tracks the same
    difference on the seeded coefficient vector only. The returned
    coefficients are T^k w with w the unit basis vector of the equilibrium.
    """
    if isinstance(T, OperatorMatrix):
        T = T.T
    T = np.asarray(T, dtype=complex)
    if T.shape != (dictionary.size, dictionary.size):
        raise ValueError(f"operator shape {T.shape} does not match dictionary size {dictionary.size}")
    if not tol > 0 or K < 1:
        raise ValueError("need tol > 0 and K >= 1")
    if mode not in ("matrix", "vector"):
        raise ValueError(f"unknown iteration mode {mode!r}")
    u = dictionary.unit_index(x_eq)
    w = np.zeros(dictionary.size, dtype=complex)
    w[u] = 1.0
    prev = np.eye(dictionary.size, dtype=complex) if mode == "matrix" else w
    residuals = []
    k = 0
    while True:
        cur, diff = matrix_power_step(T, prev)
        k += 1
        residuals.append(diff)
        coeffs = cur[:, u] if mode == "matrix" else cur
        if not np.all(np.isfinite(cur)) or np.linalg.norm(coeffs) > DIVERGENCE_LIMIT:
            raise DivergenceError(
                f"coefficients blew up at iteration {k}; "
                "try a smaller time step or more samples"
            )
        if diff <= tol or k >= K:
            break
        prev = cur
    return UApprox(dictionary, coeffs.copy(), k, residuals[-1], residuals, mode)


# ------------------------------------------------------------------- grids

@dataclass
class Grid:
    lo: np.ndarray
    hi: np.ndarray
    resolution: tuple

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / np.asarray(self.resolution)

    @property
    def axes(self) -> list:
        h = self.spacing
        return [self.lo[d] + h[d] * (np.arange(n) + 0.5) for d, n in enumerate(self.resolution)]

    def centers(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, len(self.resolution))

    def cell_of(self, x) -> tuple:
        idx = np.floor((np.asarray(x, dtype=float) - self.lo) / self.spacing).astype(int)
        return tuple(np.clip(idx, 0, np.asarray(self.resolution) - 1))


def make_grid(sys: SystemSpec, resolution) -> Grid:
    if np.isscalar(resolution):
        resolution = (int(resolution),) * sys.dim
    resolution = tuple(int(r) for r in resolution)
    if len(resolution) != sys.dim or min(resolution) < 1:
        raise ValueError(f"bad grid resolution {resolution}")
    return Grid(sys.lo.copy(), sys.hi.copy(), resolution)


@dataclass
class RoaMask:
    grid: Grid
    mask: np.ndarray
    threshold: float
    values: np.ndarray

    @property
    def volume_fraction(self) -> float:
        return float(self.mask.mean())

    def interval(self, axis: int = 0) -> tuple:
        """Extent of the masked cell centres along one axis."""
        other = tuple(d for d in range(self.mask.ndim) if d != axis)
        hit = np.any(self.mask, axis=other) if other else self.mask
        centres = self.grid.axes[axis][hit]
        return float(centres.min()), float(centres.max())


def flood_fill(region: np.ndarray, seed: tuple) -> np.ndarray:
    """Face-connected component of the boolean array ``region`` containing ``seed``."""
    region = np.asarray(region, dtype=bool)
    out = np.zeros_like(region)
    if not region[seed]:
        return out
    shape = region.shape
    out[seed] = True
    queue = deque([seed])
    while queue:
        cell = queue.popleft()
        for d in range(len(shape)):
            for step in (-1, 1):
                j = cell[d] + step
                if 0 <= j < shape[d]:
                    nb = cell[:d] + (j,) + cell[d + 1:]
                    if region[nb] and not out[nb]:
                        out[nb] = True
                        queue.append(nb)
    return out


def evaluate_on_grid(u, grid: Grid) -> np.ndarray:
    return np.asarray(_as_value(u)(grid.centers()), dtype=float).reshape(grid.resolution)


def extract_roa(u, sys: SystemSpec, resolution, c: float,
                values: Optional[np.ndarray] = None) -> RoaMask:
    """Largest face-connected superlevel set {value >= c} around x_eq."""
    if not c > 0:
        raise ValueError("threshold must be positive")
    grid = make_grid(sys, resolution)
    if values is None:
        values = evaluate_on_grid(u, grid)
    seed = grid.cell_of(sys.x_eq)
    if not values[seed] >= c:
        raise SeedBelowThresholdError(
            f"value {values[seed]:.4g} at the equilibrium cell is below threshold {c}"
        )
    return RoaMask(grid, flood_fill(values >= c, seed), float(c), values)


def threshold_sensitivity(u, sys: SystemSpec, resolution, c: float,
                          values: Optional[np.ndarray] = None) -> dict:
    """Mask volume fractions at c/2, c and 2c."""
    grid = make_grid(sys, resolution)
    if values is None:
        values = evaluate_on_grid(u, grid)
    seed = grid.cell_of(sys.x_eq)
    out = {}
    for label, level in (("half", c / 2), ("base", c), ("double", 2 * c)):
        out[label] = float(flood_fill(values >= level, seed).mean()) if values[seed] >= level else 0.0
    return out


def lie_derivative(sys: SystemSpec, u, x) -> np.ndarray:
    """grad(u)(x) . f(x), vectorised over a batch of states."""
    x = np.asarray(x, dtype=float).reshape(-1, sys.dim)
    g = np.asarray(u.grad(x), dtype=float).reshape(-1, sys.dim)
    return np.sum(g * sys.field(x), axis=-1)


def verified_fraction(sys: SystemSpec, u, mask: RoaMask, exclusion_radius: float,
                      margin: float = 0.0, lie: Optional[np.ndarray] = None) -> float:
    """Share of masked cells outside the exclusion ball with L_f u > margin.

    A grid check at cell centres, not a formal certificate.
    """
    pts = mask.grid.centers()
    sel = mask.mask.ravel() & (np.linalg.norm(pts - sys.x_eq, axis=1) > exclusion_radius)
    if not np.any(sel):
        return 0.0
    if lie is None:
        vals = lie_derivative(sys, u, pts[sel])
    else:
        vals = np.asarray(lie).ravel()[sel]
    return float(np.mean(vals > margin))


def v_zk(u, x, floor: Optional[float] = 1e-12) -> np.ndarray:
    """-log of the field value, clamped below at ``floor``."""
    val = np.asarray(_as_value(u)(x), dtype=float)
    if floor:
        val = np.maximum(val, floor)
    elif np.any(val <= 0):
        raise DomainError("field value is not positive and no floor is set")
    return -np.log(val)


def imag_residue(u: UApprox, pts) -> float:
    """max |Im U| over max |Re U| on the given points."""
    z = u.complex_value(pts)
    top = np.abs(z.real).max()
    return float(np.abs(z.imag).max() / top) if top > 0 else float("inf")


# ----------------------------------------------------------- serialisation

def write_u(path, u: UApprox) -> None:
    """Header of ``key value`` lines, a ``data`` line, then one ``re,im``
    coefficient per line."""
    with open(path, "w") as fh:
        fh.write(U_MAGIC + "\n")
        fh.write(f"size {len(u.coeffs)}\n")
        fh.write(f"iterations {u.iterations}\n")
        fh.write(f"final_residual {u.final_residual:.17g}\n")
        fh.write(f"residuals {json.dumps([float(r) for r in u.residuals])}\n")
        fh.write(f"mode {u.mode}\n")
        fh.write(f"dictionary {json.dumps(u.dictionary.descriptor(), sort_keys=True)}\n")
        fh.write(f"system {json.dumps(u.meta.get('system'), sort_keys=True)}\n")
        fh.write("data\n")
        for z in u.coeffs:
            fh.write(f"{z.real:.17g},{z.imag:.17g}\n")


def read_u(path) -> UApprox:
    with open(path) as fh:
        if fh.readline().rstrip("\n") != U_MAGIC:
            raise ValueError(f"{path}: not a u-approx file")
        head = {}
        for line in fh:
            line = line.rstrip("\n")
            if line == "data":
                break
            key, _, value = line.partition(" ")
            head[key] = value
        vals = np.loadtxt(fh, delimiter=",", ndmin=2)
    coeffs = vals[:, 0] + 1j * vals[:, 1]
    return UApprox(
        Dictionary.from_descriptor(head["dictionary"]),
        coeffs,
        int(head["iterations"]),
        float(head["final_residual"]),
        json.loads(head["residuals"]),
        head["mode"],
        {"system": json.loads(head["system"])},
    )
