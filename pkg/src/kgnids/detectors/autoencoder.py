"""Single-hidden-layer denoising autoencoder.

Training corrupts inputs by zeroing a random fraction of entries and
minimizes squared reconstruction error of the clean input plus an L2 weight
penalty, using plain mini-batch gradient descent.  The anomaly score is the
root-mean-square reconstruction error of the uncorrupted input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .base import DetectorError, DimensionError, MinMaxScaler, as_matrix, pack, unpack


class Activation(str, enum.Enum):
    RELU = "relu"
    TANH = "tanh"


def _act(z, kind):
    return np.maximum(z, 0.0) if kind is Activation.RELU else np.tanh(z)


def _act_grad(z, h, kind):
    return (z > 0).astype(float) if kind is Activation.RELU else 1.0 - h * h


def hidden_size(hidden_ratio: float, dim: int) -> int:
    return max(1, int(round(hidden_ratio * dim)))


def loss_and_grad(params: dict, x_in: np.ndarray, x_target: np.ndarray, activation, l2: float):
    """Loss and gradients for one batch.

    loss = sum((xhat - x)^2) / (2 m d) + (l2 / 2) (|W1|^2 + |W2|^2)
    """
    activation = Activation(activation)
    W1, b1, W2, b2 = params["W1"], params["b1"], params["W2"], params["b2"]
    m, d = x_target.shape
    z = x_in @ W1 + b1
    h = _act(z, activation)
    xhat = h @ W2 + b2
    err = xhat - x_target
    loss = float(np.sum(err * err) / (2 * m * d) + 0.5 * l2 * (np.sum(W1 * W1) + np.sum(W2 * W2)))
    g_out = err / (m * d)
    gW2 = h.T @ g_out + l2 * W2
    gb2 = g_out.sum(axis=0)
    g_z = (g_out @ W2.T) * _act_grad(z, h, activation)
    gW1 = x_in.T @ g_z + l2 * W1
    gb1 = g_z.sum(axis=0)
    return loss, {"W1": gW1, "b1": gb1, "W2": gW2, "b2": gb2}


def init_params(dim: int, hidden: int, rng: np.random.Generator) -> dict:
    lim = np.sqrt(6.0 / (dim + hidden))
    return {"W1": rng.uniform(-lim, lim, (dim, hidden)), "b1": np.zeros(hidden),
            "W2": rng.uniform(-lim, lim, (hidden, dim)), "b2": np.zeros(dim)}


@dataclass
class DaModel:
    hidden_ratio: float
    corruption_level: float
    activation: Activation
    l2_reg: float
    learning_rate: float
    params: dict
    scaler: MinMaxScaler
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    loss_history: list = field(default_factory=list)

    kind = "da"

    @property
    def dim(self) -> int:
        return self.params["W1"].shape[0]

    @property
    def hidden(self) -> int:
        return self.params["W1"].shape[1]

    def reconstruct_scaled(self, Z):
        h = _act(Z @ self.params["W1"] + self.params["b1"], self.activation)
        return h @ self.params["W2"] + self.params["b2"]

    def score_samples(self, X) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != self.dim:
            raise DimensionError(self.dim, X.shape[1])
        Z = self.scaler.transform(X)
        err = self.reconstruct_scaled(Z) - Z
        return np.sqrt(np.mean(err * err, axis=1))

    def hyperparams(self) -> dict:
        return {"hidden_ratio": self.hidden_ratio, "corruption_level": self.corruption_level,
                "activation": self.activation.value, "l2_reg": self.l2_reg, "learning_rate": self.learning_rate,
                "epochs": self.epochs, "batch_size": self.batch_size}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparams": self.hyperparams(), "seed": self.seed,
                "scaler": self.scaler.to_dict(), "params": {k: pack(v) for k, v in self.params.items()},
                "loss_history": list(self.loss_history)}

    @classmethod
    def from_dict(cls, d) -> "DaModel":
        hp = d["hyperparams"]
        return cls(hp["hidden_ratio"], hp["corruption_level"], Activation(hp["activation"]), hp["l2_reg"],
                   hp["learning_rate"], {k: unpack(v) for k, v in d["params"].items()},
                   MinMaxScaler.from_dict(d["scaler"]), hp["epochs"], hp["batch_size"], d["seed"],
                   list(d["loss_history"]))


def fit_da(X, hidden_ratio: float = 0.5, corruption_level: float = 0.1, activation: str = "relu",
           l2_reg: float = 1e-4, learning_rate: float = 1e-3, epochs: int = 50, batch_size: int = 32,
           seed: int = 0, min_rows: int = 32) -> DaModel:
    X = as_matrix(X, min_rows=min_rows, what="training matrix")
    if not 0.0 <= corruption_level < 1.0:
        raise DetectorError("corruption_level must lie in [0, 1)")
    if not hidden_ratio > 0:
        raise DetectorError("hidden_ratio must be > 0")
    act = Activation(activation)
    rng = np.random.default_rng(seed)
    scaler = MinMaxScaler.fit(X)
    Z = scaler.transform(X)
    n, d = Z.shape
    params = init_params(d, hidden_size(hidden_ratio, d), rng)
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            batch = Z[order[start:start + batch_size]]
            noisy = batch * (rng.random(batch.shape) >= corruption_level) if corruption_level > 0 else batch
            loss, grads = loss_and_grad(params, noisy, batch, act, l2_reg)
            for k in params:
                params[k] -= learning_rate * grads[k]
            total += loss * len(batch)
        history.append(total / n)
        if not np.isfinite(history[-1]):
            raise DetectorError("autoencoder training diverged")
    return DaModel(hidden_ratio, corruption_level, act, l2_reg, learning_rate, params, scaler, epochs,
                   batch_size, seed, history)
