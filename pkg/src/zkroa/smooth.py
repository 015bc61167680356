"""A small tanh network fitted to samples of U_ZK, giving a smooth surrogate
whose input gradient is available in closed form."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError

MODEL_MAGIC = "# zkroa smooth-model v1"


@dataclass
class SmoothModel:
    sizes: list                 # [n_in, h1, ..., 1]
    weights: list               # weights[l] has shape (sizes[l+1], sizes[l])
    biases: list
    x_mean: np.ndarray = None
    x_std: np.ndarray = None
    y_mean: float = 0.0
    y_std: float = 1.0
    epochs: int = 0
    final_mse: float = float("nan")
    history: list = field(default_factory=list)

    def __post_init__(self):
        n = self.sizes[0]
        if self.x_mean is None:
            self.x_mean = np.zeros(n)
        if self.x_std is None:
            self.x_std = np.ones(n)

    def _forward(self, z):
        acts = [z]
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = z @ W.T + b
            if l < len(self.weights) - 1:
                z = np.tanh(z)
            acts.append(z)
        return acts

    def _inputs(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.sizes[0])
        return (x - self.x_mean) / self.x_std

    def value(self, x) -> np.ndarray:
        out = self._forward(self._inputs(x))[-1][:, 0]
        return out * self.y_std + self.y_mean

    def grad(self, x) -> np.ndarray:
        """d value / d x for each row of x, by reverse mode through the layers."""
        acts = self._forward(self._inputs(x))
        m = acts[0].shape[0]
        delta = np.ones((m, 1))
        for l in range(len(self.weights) - 1, -1, -1):
            if l < len(self.weights) - 1:
                delta = delta * (1.0 - acts[l + 1] ** 2)
            delta = delta @ self.weights[l]
        return delta * self.y_std / self.x_std

    def mse(self, x, y) -> float:
        return float(np.mean((self.value(x) - np.asarray(y, dtype=float)) ** 2))


def init_model(sizes, seed: int) -> SmoothModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return SmoothModel(list(sizes), ws, bs)


def loss_and_grads(model: SmoothModel, z, t):
    """Mean-squared error in standardised units and its parameter gradients."""
    acts = model._forward(z)
    m = z.shape[0]
    err = acts[-1] - t[:, None]
    loss = float(np.mean(err ** 2))
    delta = 2.0 * err / m
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for l in range(len(model.weights) - 1, -1, -1):
        if l < len(model.weights) - 1:
            delta = delta * (1.0 - acts[l + 1] ** 2)
        gw[l] = delta.T @ acts[l]
        gb[l] = delta.sum(axis=0)
        delta = delta @ model.weights[l]
    return loss, gw, gb


def train(samples, targets, widths, epochs: int, mse_tol: float, seed: int = 0,
          lr: float = 1e-2, momentum: float = 0.9) -> SmoothModel:
    """Full-batch gradient descent with momentum on the mean-squared error.

    Inputs and targets are standardised internally. Training stops once the
    error in original units reaches ``mse_tol`` or after ``epochs`` epochs.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(targets, dtype=float).ravel()
    if len(x) == 0 or not widths:
        raise ValueError("need samples and at least one hidden layer")
    model = init_model([x.shape[1], *widths, 1], seed)
    model.x_mean = x.mean(axis=0)
    sd = x.std(axis=0)
    model.x_std = np.where(sd > 0, sd, 1.0)
    model.y_mean = float(y.mean())
    # Constant targets are represented exactly: a zero output scale makes
    # the model return the mean whatever the network computes.
    model.y_std = float(y.std())
    z = model._inputs(x)
    t = (y - model.y_mean) / model.y_std if model.y_std > 0 else np.zeros_like(y)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    scale2 = model.y_std ** 2
    epoch = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, epochs + 1):
            loss, gw, gb = loss_and_grads(model, z, t)
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss became non-finite at epoch {epoch}")
            if loss * scale2 <= mse_tol:
                epoch -= 1
                break
            for l in range(len(model.weights)):
                vel_w[l] = momentum * vel_w[l] - lr * gw[l]
                vel_b[l] = momentum * vel_b[l] - lr * gb[l]
                model.weights[l] += vel_w[l]
                model.biases[l] += vel_b[l]
            model.history.append(loss * scale2)
    model.epochs = epoch
    model.final_mse = model.mse(x, y)
    if not np.isfinite(model.final_mse):
        raise DivergenceError(f"training diverged by epoch {epoch}")
    return model


def write_model(path, model: SmoothModel) -> None:
    """Header lines (sizes, activation, standardisation, training record),
    a ``data`` line, then for each layer its weights row-major followed by
    its biases, one number per line."""
    with open(path, "w") as fh:
        fh.write(MODEL_MAGIC + "\n")
        fh.write("sizes " + " ".join(str(s) for s in model.sizes) + "\n")
        fh.write("activation tanh\n")
        fh.write("x_mean " + " ".join(f"{v:.17g}" for v in model.x_mean) + "\n")
        fh.write("x_std " + " ".join(f"{v:.17g}" for v in model.x_std) + "\n")
        fh.write(f"y_mean {model.y_mean:.17g}\n")
        fh.write(f"y_std {model.y_std:.17g}\n")
        fh.write(f"epochs {model.epochs}\n")
        fh.write(f"final_mse {model.final_mse:.17g}\n")
        fh.write("data\n")
        for W, b in zip(model.weights, model.biases):
            for v in W.ravel():
                fh.write(f"{v:.17g}\n")
            for v in b:
                fh.write(f"{v:.17g}\n")


def read_model(path) -> SmoothModel:
    with open(path) as fh:
        if fh.readline().rstrip("\n") != MODEL_MAGIC:
            raise ValueError(f"{path}: not a smooth-model file")
        head = {}
        for line in fh:
            line = line.rstrip("\n")
            if line == "data":
                break
            key, _, value = line.partition(" ")
            head[key] = value
        flat = np.loadtxt(fh, ndmin=1)
    sizes = [int(s) for s in head["sizes"].split()]
    ws, bs, pos = [], [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        ws.append(flat[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in))
        pos += fan_in * fan_out
        bs.append(flat[pos:pos + fan_out].copy())
        pos += fan_out
    return SmoothModel(
        sizes, ws, bs,
        np.array([float(v) for v in head["x_mean"].split()]),
        np.array([float(v) for v in head["x_std"].split()]),
        float(head["y_mean"]), float(head["y_std"]),
        int(head["epochs"]), float(head["final_mse"]),
    )
