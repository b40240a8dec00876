"""Anomaly-score thresholds calibrated to a benign false-positive budget."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .base import DetectorError

logger = logging.getLogger(__name__)

FPR_TARGETS = (0.0, 1e-4, 1e-3)


@dataclass(frozen=True)
class Threshold:
    value: float
    fpr_target: float
    calibration_fpr: float = 0.0
    n_calibration: int = 0

    def flags(self, scores) -> np.ndarray:
        """True where a score is flagged anomalous (strictly above the threshold)."""
        return np.asarray(scores) > self.value

    def to_dict(self):
        return {"value": self.value, "fpr_target": self.fpr_target,
                "calibration_fpr": self.calibration_fpr, "n_calibration": self.n_calibration}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["value"]), float(d["fpr_target"]), float(d.get("calibration_fpr", 0.0)),
                   int(d.get("n_calibration", 0)))


def _above_max(m: float) -> float:
    bumped = m + abs(m) * 1e-9
    return bumped if bumped > m else float(np.nextafter(m, math.inf))


def calibrate_threshold(scores, fpr_target: float) -> Threshold:
    """Smallest cut whose benign exceedance rate (scores strictly above) is <= ``fpr_target``."""
    s = np.asarray(scores, dtype=float).ravel()
    if s.size == 0:
        raise DetectorError("cannot calibrate on an empty score set")
    if not np.all(np.isfinite(s)):
        raise DetectorError("calibration scores contain non-finite values")
    if not 0.0 <= fpr_target < 1.0:
        raise DetectorError("fpr_target must lie in [0, 1)")
    n = s.size
    if fpr_target == 0.0:
        value = _above_max(float(s.max()))
    elif n * fpr_target < 1.0:
        logger.warning("only %d calibration scores for target %g; using the maximum", n, fpr_target)
        value = _above_max(float(s.max()))
    else:
        k = int(math.floor(fpr_target * n + 1e-9))   # allowed exceedances
        ordered = np.sort(s)
        value = float(ordered[n - k - 1])
    exceed = int(np.count_nonzero(s > value))
    return Threshold(value, fpr_target, exceed / n, n)
