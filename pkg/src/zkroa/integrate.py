"""Fixed-step RK4 on the augmented system (x' = f(x), I' = eta(x)) and
boundary clipping that realises the stopped flow on the region box."""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import IntegrationBlowup
from .systems import SystemSpec

__all__ = [
    "RawTrajectory",
    "ClippedTrajectory",
    "Terminal",
    "simulate_augmented",
    "clip_to_region",
    "segment_exit_point",
    "stopped_trajectory",
    "terminal_states",
    "evaluate_T_delta",
    "worker_count",
    "write_trajectory_csv",
]


@dataclass
class RawTrajectory:
    times: np.ndarray      # (n_points,)
    states: np.ndarray     # (n_points, dim)
    integrals: np.ndarray  # (n_points,)

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclass
class ClippedTrajectory(RawTrajectory):
    exited: bool = False
    exit_index: Optional[int] = None
    boundary_point: Optional[np.ndarray] = None


@dataclass
class Terminal:
    """Last sample of the clipped trajectories of a batch of initial states."""
    states: np.ndarray      # (M, dim)
    integrals: np.ndarray   # (M,)
    exit_index: np.ndarray  # (M,), -1 where the trajectory stayed inside

    @property
    def exited(self) -> np.ndarray:
        return self.exit_index >= 0


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("ZK_WORKERS", "1")))
    except ValueError:
        return 1


def _augmented_rhs(sys: SystemSpec) -> Callable[[np.ndarray], np.ndarray]:
    n = sys.dim

    def rhs(y):
        x = y[..., :n]
        return np.concatenate([sys.field(x), sys.eta(x)[..., None]], axis=-1)

    return rhs


def _rk4(rhs, y, h):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_args(dt, n_points):
    if n_points < 2:
        raise ValueError(f"need at least 2 partition points, got {n_points}")
    if not dt > 0:
        raise ValueError(f"time horizon must be positive, got {dt}")


def simulate_augmented(
    sys: SystemSpec, x0, dt: float, n_points: int, stop_outside: bool = True
) -> RawTrajectory:
    """Integrate the augmented ODE on a uniform partition of [0, dt].

    With ``stop_outside`` the integration halts after the first sample that
    leaves the region and that sample is repeated to the end; clipping
    overwrites those entries anyway, and it keeps trajectories that blow up
    in finite time beyond the box from overflowing.
    """
    _check_args(dt, n_points)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    rhs = _augmented_rhs(sys)
    h = dt / (n_points - 1)
    ys = np.empty((n_points, sys.dim + 1))
    ys[0, :-1] = x0
    ys[0, -1] = 0.0
    j = 1
    with np.errstate(over="ignore", invalid="ignore"):
        while j < n_points:
            ys[j] = _rk4(rhs, ys[j - 1], h)
            if not np.all(np.isfinite(ys[j])):
                raise IntegrationBlowup(
                    f"non-finite state at step {j} from x0={x0.tolist()}", index=j
                )
            if stop_outside and not sys.contains(ys[j, :-1]):
                ys[j + 1:] = ys[j]
                break
            j += 1
    times = np.linspace(0.0, dt, n_points)
    return RawTrajectory(times, ys[:, :-1].copy(), ys[:, -1].copy())


def segment_exit_point(p, q, lo, hi) -> np.ndarray:
    """First point where the segment p -> q meets the boundary of the box.

    ``p`` must be inside the box and ``q`` outside. Vectorised over leading
    axes. The coordinate of the face that is hit is set exactly.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t_hi = np.where(q > hi, (hi - p) / d, np.inf)
        t_lo = np.where(q < lo, (lo - p) / d, np.inf)
    t_axis = np.minimum(t_hi, t_lo)
    axis = np.argmin(t_axis, axis=-1)
    t = np.clip(np.take_along_axis(t_axis, axis[..., None], axis=-1), 0.0, 1.0)
    r = np.clip(p + t * d, lo, hi)
    idx = axis[..., None]
    hit_hi = np.take_along_axis(t_hi, idx, -1) <= np.take_along_axis(t_lo, idx, -1)
    face = np.where(
        hit_hi,
        np.take_along_axis(np.broadcast_to(hi, r.shape), idx, -1),
        np.take_along_axis(np.broadcast_to(lo, r.shape), idx, -1),
    )
    np.put_along_axis(r, idx, face, axis=-1)
    return r


def clip_to_region(traj: RawTrajectory, sys: SystemSpec) -> ClippedTrajectory:
    """Freeze the trajectory at its first crossing of the region boundary.

    Entries from the first outside index onwards are replaced by the crossing
    point, and the integral keeps growing at the constant rate eta(crossing).
    """
    inside = sys.contains(traj.states)
    if not inside[0]:
        raise ValueError("initial state lies outside the region")
    outside = np.flatnonzero(~inside)
    if outside.size == 0:
        return ClippedTrajectory(
            traj.times.copy(), traj.states.copy(), traj.integrals.copy()
        )
    iota = int(outside[0])
    h = traj.step
    point = segment_exit_point(traj.states[iota - 1], traj.states[iota], sys.lo, sys.hi)
    states = traj.states.copy()
    integrals = traj.integrals.copy()
    states[iota:] = point
    rate = float(sys.eta(point))
    steps = np.arange(iota, len(integrals)) - iota + 1
    integrals[iota:] = integrals[iota - 1] + steps * rate * h
    return ClippedTrajectory(
        traj.times.copy(), states, integrals,
        exited=True, exit_index=iota, boundary_point=point,
    )


def stopped_trajectory(sys: SystemSpec, x0, dt: float, n_points: int) -> ClippedTrajectory:
    return clip_to_region(simulate_augmented(sys, x0, dt, n_points), sys)


def _terminal_chunk(sys, x0, dt, n_points, offset):
    rhs = _augmented_rhs(sys)
    h = dt / (n_points - 1)
    m = x0.shape[0]
    y = np.concatenate([x0, np.zeros((m, 1))], axis=1)
    final = np.empty_like(y)
    exit_index = np.full(m, -1, dtype=int)
    active = np.arange(m)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(1, n_points):
            if active.size == 0:
                break
            prev = y[active]
            new = _rk4(rhs, prev, h)
            bad = ~np.all(np.isfinite(new), axis=1)
            if np.any(bad):
                k = int(active[np.flatnonzero(bad)[0]])
                raise IntegrationBlowup(
                    f"non-finite state at step {j} for sample {k + offset}",
                    index=j, sample=k + offset,
                )
            out = ~sys.contains(new[:, :-1])
            if np.any(out):
                rows = active[out]
                point = segment_exit_point(
                    prev[out, :-1], new[out, :-1], sys.lo, sys.hi
                )
                final[rows, :-1] = point
                final[rows, -1] = prev[out, -1] + (n_points - j) * sys.eta(point) * h
                exit_index[rows] = j
            y[active] = new
            active = active[~out]
    final[active] = y[active]
    return final, exit_index


def terminal_states(
    sys: SystemSpec, x0, dt: float, n_points: int, workers: Optional[int] = None
) -> Terminal:
    """Clipped final state and integral for every row of ``x0``.

    Equivalent to taking the last sample of :func:`stopped_trajectory` per
    initial state, without storing whole trajectories. Chunks are mapped over
    a thread pool and reassembled in sample order.
    """
    _check_args(dt, n_points)
    x0 = np.asarray(x0, dtype=float).reshape(-1, sys.dim)
    if not np.all(sys.contains(x0)):
        bad = int(np.flatnonzero(~sys.contains(x0))[0])
        raise ValueError(f"sample {bad} lies outside the region")
    workers = workers or worker_count()
    bounds = np.linspace(0, len(x0), min(workers, max(len(x0), 1)) + 1).astype(int)
    chunks = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if len(chunks) <= 1:
        results = [_terminal_chunk(sys, x0, dt, n_points, 0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda ab: _terminal_chunk(sys, x0[ab[0]:ab[1]], dt, n_points, ab[0]),
                chunks,
            ))
    final = np.concatenate([r[0] for r in results]) if results else np.empty((0, sys.dim + 1))
    exit_index = np.concatenate([r[1] for r in results]) if results else np.empty(0, int)
    return Terminal(final[:, :-1], final[:, -1], exit_index)


def evaluate_T_delta(sys: SystemSpec, func, x, dt: float, n_points: int):
    """exp(-integral) * func(terminal state) along the stopped trajectory from x.

    ``x`` may be a single state or a batch of shape (M, dim); ``func`` must
    accept a batch of states.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 or (x.ndim == 1 and x.shape[0] == sys.dim)
    term = terminal_states(sys, x.reshape(-1, sys.dim), dt, n_points)
    vals = np.exp(-term.integrals) * np.asarray(func(term.states))
    return vals[0] if single else vals


def write_trajectory_csv(path, traj: RawTrajectory) -> None:
    n = traj.states.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x_{d + 1}" for d in range(n)] + ["I"])
        for t, x, i in zip(traj.times, traj.states, traj.integrals):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in x] + [f"{i:.17g}"])
