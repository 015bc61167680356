"""Training-data stacking and the least-squares operator fit."""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dictionary import Dictionary
from .errors import IntegrationBlowup
from .integrate import terminal_states
from .linalg import pinv_hermitian
from .systems import SystemSpec

log = logging.getLogger(__name__)

OPERATOR_MAGIC = "# zkroa operator v1"


@dataclass
class DataMatrices:
    X: np.ndarray
    Y: np.ndarray
    samples: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass
class OperatorMatrix:
    T: np.ndarray
    reg: float
    residual: float
    rank: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.T.shape[0]


def stack_data(sys: SystemSpec, dictionary: Dictionary, samples, dt: float,
               n_points: int, workers: Optional[int] = None) -> DataMatrices:
    """Feature rows Z(x_m) and label rows exp(-I_m) Z(x_m(dt)) per sample.

    One stopped trajectory per sample is shared by every basis function.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1, sys.dim)
    if len(samples) < dictionary.size:
        warnings.warn(
            f"{len(samples)} samples for {dictionary.size} basis functions; "
            "the fit is underdetermined",
            stacklevel=2,
        )
    try:
        term = terminal_states(sys, samples, dt, n_points, workers=workers)
    except IntegrationBlowup as exc:
        raise IntegrationBlowup(
            f"while stacking data: {exc}", index=exc.index, sample=exc.sample
        ) from exc
    X = dictionary.eval(samples)
    Y = dictionary.eval(term.states) * np.exp(-term.integrals)[:, None]
    meta = {
        "dt": dt,
        "steps": n_points,
        "dictionary": dictionary.descriptor(),
        "exited": int(term.exited.sum()),
    }
    return DataMatrices(X, Y, samples, meta)


def fit_operator(data: DataMatrices, svd_tol: float = 1e-12) -> OperatorMatrix:
    """T = (X^H X)^+ X^H Y with the Gram pseudoinverse from Jacobi sweeps."""
    X, Y = data.X, data.Y
    if X.size == 0:
        raise ValueError("empty feature matrix")
    G = X.conj().T @ X
    G_pinv, rank = pinv_hermitian(G, svd_tol)
    T = G_pinv @ (X.conj().T @ Y)
    residual = float(np.linalg.norm(Y - X @ T))
    log.info("fitted operator: size %d, rank %d, residual %.3e", T.shape[0], rank, residual)
    return OperatorMatrix(T, svd_tol, residual, rank, dict(data.meta))


def matrix_power_step(T, W_prev):
    """Return ``(T @ W_prev, ||T @ W_prev - W_prev||_F)``.

    ``W_prev`` may be a matrix (a previous power of T) or a coefficient vector.
    """
    T = np.asarray(T)
    W_prev = np.asarray(W_prev)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValueError("T must be square")
    if W_prev.shape[0] != T.shape[1]:
        raise ValueError(f"shape mismatch: {T.shape} and {W_prev.shape}")
    W = T @ W_prev
    return W, float(np.linalg.norm(W - W_prev))


@dataclass
class Eigenpair:
    mu: complex
    vector: np.ndarray
    rate: complex  # log(mu) / dt
    converged: bool


def _power(A, x, tol, max_iter):
    mu = 0j
    for _ in range(max_iter):
        y = A @ x
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0j, x, True
        mu_new = np.vdot(x, y)
        x_new = y / nrm
        # Fix the phase so successive iterates are comparable.
        k = np.argmax(np.abs(x_new))
        x_new = x_new * (abs(x_new[k]) / x_new[k])
        if np.linalg.norm(x_new - x) <= tol and abs(mu_new - mu) <= tol * max(1.0, abs(mu_new)):
            return mu_new, x_new, True
        x, mu = x_new, mu_new
    return mu, x, False


def spectrum(T, top_k: int, dt: float = 1.0, tol: float = 1e-10,
             max_iter: int = 5000, seed: int = 0) -> list[Eigenpair]:
    """Leading eigenpairs by modulus via power iteration and deflation.

    After each pair, a left eigenvector from power iteration on T^H is used
    for the deflation A <- A - mu v u^H / (u^H v), which leaves the rest of
    the spectrum in place. Pairs that hit the iteration cap are returned
    with ``converged=False``.
    """
    A = np.array(T, dtype=complex)
    n = A.shape[0]
    if top_k > n:
        raise ValueError("top_k exceeds matrix size")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(top_k):
        x0 = rng.normal(size=n) + 1j * rng.normal(size=n)
        mu, v, ok = _power(A, x0 / np.linalg.norm(x0), tol, max_iter)
        _, u, ok_left = _power(A.conj().T, x0 / np.linalg.norm(x0), tol, max_iter)
        with np.errstate(divide="ignore", invalid="ignore"):
            rate = np.log(mu + 0j) / dt
        out.append(Eigenpair(complex(mu), v, complex(rate), bool(ok)))
        denom = np.vdot(u, v)
        if abs(denom) < 1e-14:
            break
        A = A - mu * np.outer(v, u.conj()) / denom
    return out


# ----------------------------------------------------------- serialisation

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_operator(path, op: OperatorMatrix) -> None:
    """Text format: a header of ``key value`` lines, a ``data`` line, then
    one ``re,im`` pair per line in row-major order."""
    meta = dict(op.meta)
    with open(path, "w") as fh:
        fh.write(OPERATOR_MAGIC + "\n")
        fh.write(f"size {op.size}\n")
        fh.write(f"dt {_fmt(float(meta.get('dt', float('nan'))))}\n")
        fh.write(f"steps {int(meta.get('steps', 0))}\n")
        fh.write(f"reg {_fmt(op.reg)}\n")
        fh.write(f"rank {op.rank}\n")
        fh.write(f"residual {_fmt(op.residual)}\n")
        fh.write(f"dictionary {json.dumps(meta.get('dictionary'), sort_keys=True)}\n")
        fh.write(f"system {json.dumps(meta.get('system'), sort_keys=True)}\n")
        fh.write("data\n")
        for z in op.T.ravel():
            fh.write(f"{_fmt(z.real)},{_fmt(z.imag)}\n")


def read_operator(path) -> OperatorMatrix:
    with open(path) as fh:
        if fh.readline().rstrip("\n") != OPERATOR_MAGIC:
            raise ValueError(f"{path}: not an operator file")
        head = {}
        for line in fh:
            line = line.rstrip("\n")
            if line == "data":
                break
            key, _, value = line.partition(" ")
            head[key] = value
        n = int(head["size"])
        vals = np.loadtxt(fh, delimiter=",", ndmin=2)
    T = (vals[:, 0] + 1j * vals[:, 1]).reshape(n, n)
    meta = {
        "dt": float(head["dt"]),
        "steps": int(head["steps"]),
        "dictionary": json.loads(head["dictionary"]),
        "system": json.loads(head["system"]),
    }
    return OperatorMatrix(T, float(head["reg"]), float(head["residual"]),
                          int(head["rank"]), meta)


def write_spectrum_csv(path, pairs: list[Eigenpair]) -> None:
    with open(path, "w") as fh:
        fh.write("index,re_mu,im_mu,re_rate,im_rate,converged\n")
        for i, p in enumerate(pairs):
            fh.write(
                f"{i},{_fmt(p.mu.real)},{_fmt(p.mu.imag)},"
                f"{_fmt(p.rate.real)},{_fmt(p.rate.imag)},{int(p.converged)}\n"
            )
