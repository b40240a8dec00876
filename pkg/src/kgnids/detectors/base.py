"""Shared pieces: input checks, min-max scaling, flat-array serialization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODEL_FORMAT = "kgnids-model/1"


class DetectorError(ValueError):
    pass


class DimensionError(DetectorError):
    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"dimension mismatch: model expects {expected} features, got {actual}")


def as_matrix(X, min_rows: int = 1, what: str = "input") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DetectorError(f"{what} must be a 2-D matrix")
    if len(X) < min_rows:
        raise DetectorError(f"{what} has {len(X)} rows, need at least {min_rows}")
    if not np.all(np.isfinite(X)):
        raise DetectorError(f"{what} contains non-finite values")
    return X


@dataclass
class MinMaxScaler:
    """Per-dimension shift/scale onto [0, 1] over the training data.

    Constant dimensions keep scale 1, so any departure from the training value
    stays visible instead of collapsing to zero.
    """

    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "MinMaxScaler":
        lo = X.min(axis=0)
        rng = X.max(axis=0) - lo
        return cls(lo, np.where(rng > 0, rng, 1.0))

    @property
    def dim(self) -> int:
        return len(self.shift)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.dim:
            raise DimensionError(self.dim, X.shape[-1])
        return (X - self.shift) / self.scale

    def to_dict(self):
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["shift"], dtype=float), np.array(d["scale"], dtype=float))


def pack(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def unpack(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=float).reshape(d["shape"])
