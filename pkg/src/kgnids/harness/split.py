"""Time-ordered train / validation / test split."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .generate import BENIGN_LABEL

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions) or abs(sum(self.fractions) - 1) > 1e-9:
            raise ValueError("fractions must be three non-negative numbers summing to 1")


def is_benign(label) -> bool:
    return label is None or label == "" or label == BENIGN_LABEL


@dataclass
class Split:
    train: np.ndarray          # row indices into the input, benign only
    val: np.ndarray            # benign only
    test: np.ndarray           # every row in the last window
    dropped_train: int
    dropped_val: int

    def summary(self) -> dict:
        return {"train": len(self.train), "val": len(self.val), "test": len(self.test),
                "dropped_attack_rows_train": self.dropped_train, "dropped_attack_rows_val": self.dropped_val}


def time_split(ts, labels, spec: SplitSpec | None = None) -> Split:
    """Split rows by timestamp rank; attack rows in the training and validation windows are dropped."""
    spec = spec or SplitSpec()
    ts = np.asarray(ts, dtype=float)
    if len(ts) != len(labels):
        raise ValueError("timestamps and labels differ in length")
    order = np.argsort(ts, kind="stable")
    n = len(order)
    a = int(np.floor(spec.fractions[0] * n + 1e-9))
    b = int(np.floor((spec.fractions[0] + spec.fractions[1]) * n + 1e-9))
    benign = np.array([is_benign(x) for x in labels], dtype=bool)
    tr, va, te = order[:a], order[a:b], order[b:]
    train = tr[benign[tr]]
    val = va[benign[va]]
    if len(train) == 0:
        raise ValueError("no benign rows in the training window")
    out = Split(train, val, te, int(len(tr) - len(train)), int(len(va) - len(val)))
    if out.dropped_train or out.dropped_val:
        logger.warning("dropped %d attack rows from train and %d from validation", out.dropped_train, out.dropped_val)
    return out
