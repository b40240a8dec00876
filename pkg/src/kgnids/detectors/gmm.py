"""Gaussian mixture density fitted by expectation-maximization.

Anomaly score is the negative log-likelihood of a (scaled) vector.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .base import DetectorError, DimensionError, MinMaxScaler, as_matrix, pack, unpack

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2 * np.pi)


class CovarianceKind(str, enum.Enum):
    DIAG = "diag"
    SPHERICAL = "spherical"


@dataclass
class GmmModel:
    n_components: int
    covariance_kind: CovarianceKind
    weights: np.ndarray        # (k,)
    means: np.ndarray          # (k, d)
    variances: np.ndarray      # (k, d); spherical rows hold one repeated value
    scaler: MinMaxScaler
    var_floor: float = 1e-6
    ll_history: list = field(default_factory=list)
    converged: bool = False
    seed: int = 0

    kind = "gmm"

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _log_joint(self, Z):
        # log w_k + log N(z | mu_k, diag(var_k)) for every row and component
        inv = 1.0 / self.variances
        quad = (Z * Z) @ inv.T - 2 * Z @ (self.means * inv).T + np.sum(self.means ** 2 * inv, axis=1)
        logdet = np.sum(np.log(self.variances), axis=1)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logw - 0.5 * (self.dim * LOG_2PI + logdet + np.maximum(quad, 0.0))

    def log_likelihood(self, X) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != self.dim:
            raise DimensionError(self.dim, X.shape[1])
        return logsumexp(self._log_joint(self.scaler.transform(X)), axis=1)

    def score_samples(self, X) -> np.ndarray:
        return -self.log_likelihood(X)

    def responsibilities(self, X) -> np.ndarray:
        lj = self._log_joint(self.scaler.transform(as_matrix(X)))
        return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))

    def hyperparams(self) -> dict:
        return {"n_components": self.n_components, "covariance_type": self.covariance_kind.value}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparams": self.hyperparams(), "seed": self.seed,
                "var_floor": self.var_floor, "scaler": self.scaler.to_dict(),
                "weights": pack(self.weights), "means": pack(self.means), "variances": pack(self.variances),
                "ll_history": list(self.ll_history), "converged": self.converged}

    @classmethod
    def from_dict(cls, d) -> "GmmModel":
        hp = d["hyperparams"]
        return cls(hp["n_components"], CovarianceKind(hp["covariance_type"]), unpack(d["weights"]),
                   unpack(d["means"]), unpack(d["variances"]), MinMaxScaler.from_dict(d["scaler"]),
                   d["var_floor"], list(d["ll_history"]), d["converged"], d["seed"])


def kmeans_pp(Z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(Z)
    centers = [Z[rng.integers(n)]]
    d2 = np.sum((Z - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        i = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(Z[i])
        d2 = np.minimum(d2, np.sum((Z - Z[i]) ** 2, axis=1))
    return np.array(centers)


def _m_step(Z, resp, kind, floor, prev_means, prev_vars):
    nk = resp.sum(axis=0)
    n, d = Z.shape
    weights = nk / n
    empty = nk <= 0
    safe = np.where(empty, 1.0, nk)
    means = (resp.T @ Z) / safe[:, None]
    # E[z^2] - mean^2 loses precision; use centred sums
    var = np.empty_like(means)
    for j in range(len(nk)):
        c = Z - means[j]
        var[j] = (resp[:, j] @ (c * c)) / safe[j]
    if kind is CovarianceKind.SPHERICAL:
        var = np.repeat(var.mean(axis=1, keepdims=True), d, axis=1)
    var = np.maximum(var, floor)
    if empty.any():
        # a component that lost every point keeps its old parameters at zero weight
        means[empty] = prev_means[empty]
        var[empty] = prev_vars[empty]
    return weights, means, var


def fit_gmm(X, n_components: int = 3, covariance_type: str = "diag", seed: int = 0, tol: float = 1e-4,
            max_iter: int = 200, var_floor: float = 1e-6) -> GmmModel:
    X = as_matrix(X, min_rows=n_components, what="training matrix")
    if n_components < 1:
        raise DetectorError("n_components must be >= 1")
    kind = CovarianceKind(covariance_type)
    rng = np.random.default_rng(seed)
    scaler = MinMaxScaler.fit(X)
    Z = scaler.transform(X)
    n, d = Z.shape
    centers = kmeans_pp(Z, n_components, rng)
    # initial responsibilities: hard assignment to the nearest seed
    dist = np.sum((Z[:, None, :] - centers[None, :, :]) ** 2, axis=2) if n * n_components * d <= 5e7 else \
        (np.sum(Z * Z, axis=1)[:, None] - 2 * Z @ centers.T + np.sum(centers ** 2, axis=1))
    resp = np.zeros((n, n_components))
    resp[np.arange(n), np.argmin(dist, axis=1)] = 1.0
    init_var = np.maximum(np.repeat(Z.var(axis=0, keepdims=True), n_components, axis=0), var_floor)
    weights, means, var = _m_step(Z, resp, kind, var_floor, centers, init_var)
    model = GmmModel(n_components, kind, weights, means, var, scaler, var_floor, [], False, seed)
    prev = -np.inf
    for it in range(max_iter):
        lj = model._log_joint(Z)
        lse = logsumexp(lj, axis=1, keepdims=True)
        ll = float(lse.mean())
        if not np.isfinite(ll):
            raise DetectorError("EM diverged: every component collapsed")
        model.ll_history.append(ll)
        if ll - prev < tol and it > 0:
            model.converged = True
            break
        prev = ll
        resp = np.exp(lj - lse)
        model.weights, model.means, model.variances = _m_step(Z, resp, kind, var_floor, model.means, model.variances)
    logger.debug("gmm k=%d %s: %d iterations, ll=%.6f", n_components, kind.value, len(model.ll_history),
                 model.ll_history[-1])
    return model
