"""Ensemble of small autoencoders over groups of correlated features.

Features are grouped by hierarchical clustering of 1 - |corr|; the
dendrogram is cut top-down until every group holds at most ``max_ae``
features.  Each group gets its own autoencoder, and an output autoencoder
learns the vector of per-group reconstruction errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import linkage, to_tree
from scipy.spatial.distance import squareform

from .autoencoder import DaModel, fit_da
from .base import DetectorError, DimensionError, MinMaxScaler, as_matrix


def correlation_distance(X: np.ndarray) -> np.ndarray:
    d = X.shape[1]
    Xc = X - X.mean(axis=0)
    norms = np.sqrt(np.sum(Xc * Xc, axis=0))
    ok = norms > 0
    corr = np.zeros((d, d))
    if ok.any():
        U = Xc[:, ok] / norms[ok]
        corr[np.ix_(ok, ok)] = U.T @ U
    dist = 1.0 - np.clip(np.abs(corr), 0.0, 1.0)
    np.fill_diagonal(dist, 0.0)
    return (dist + dist.T) / 2


def feature_groups(X: np.ndarray, max_ae: int) -> list[list[int]]:
    """Partition column indices into correlated groups of size <= max_ae."""
    if max_ae < 1:
        raise DetectorError("max_ae must be >= 1")
    d = X.shape[1]
    if d <= max_ae:
        return [list(range(d))]
    if max_ae == 1:
        return [[i] for i in range(d)]
    tree = to_tree(linkage(squareform(correlation_distance(X), checks=False), method="single"))
    groups = []
    stack = [tree]
    while stack:
        node = stack.pop()
        if node.get_count() <= max_ae:
            groups.append(sorted(node.pre_order()))
        else:
            stack.extend((node.get_right(), node.get_left()))
    return sorted(groups)


@dataclass
class EnsembleModel:
    max_ae: int
    groups: list
    sub_models: list
    output_model: DaModel
    scaler: MinMaxScaler

    kind = "kit"

    @property
    def dim(self) -> int:
        return self.scaler.dim

    def group_errors(self, X) -> np.ndarray:
        Z = self.scaler.transform(X)
        return np.column_stack([m.score_samples(Z[:, g]) for g, m in zip(self.groups, self.sub_models)])

    def score_samples(self, X) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != self.dim:
            raise DimensionError(self.dim, X.shape[1])
        return self.output_model.score_samples(self.group_errors(X))

    def hyperparams(self) -> dict:
        hp = dict(self.output_model.hyperparams())
        hp["maxAE"] = self.max_ae
        return hp

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparams": self.hyperparams(), "max_ae": self.max_ae,
                "groups": self.groups, "scaler": self.scaler.to_dict(),
                "sub_models": [m.to_dict() for m in self.sub_models], "output_model": self.output_model.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "EnsembleModel":
        return cls(d["max_ae"], [list(g) for g in d["groups"]], [DaModel.from_dict(m) for m in d["sub_models"]],
                   DaModel.from_dict(d["output_model"]), MinMaxScaler.from_dict(d["scaler"]))


def fit_ensemble(X, max_ae: int = 10, hidden_ratio: float = 0.75, learning_rate: float = 0.1,
                 corruption_level: float = 0.0, activation: str = "relu", l2_reg: float = 0.0,
                 epochs: int = 50, batch_size: int = 32, seed: int = 0) -> EnsembleModel:
    X = as_matrix(X, min_rows=32, what="training matrix")
    scaler = MinMaxScaler.fit(X)
    Z = scaler.transform(X)
    groups = feature_groups(Z, max_ae)
    kw = dict(hidden_ratio=hidden_ratio, corruption_level=corruption_level, activation=activation,
              l2_reg=l2_reg, learning_rate=learning_rate, epochs=epochs, batch_size=batch_size)
    subs = [fit_da(Z[:, g], seed=seed + 1 + i, **kw) for i, g in enumerate(groups)]
    errors = np.column_stack([m.score_samples(Z[:, g]) for g, m in zip(groups, subs)])
    out = fit_da(errors, seed=seed, **kw)
    return EnsembleModel(max_ae, groups, subs, out, scaler)
