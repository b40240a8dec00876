"""Hyperparameter grid search with FPR-calibrated thresholds."""

from __future__ import annotations

import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..detectors import FPR_TARGETS, calibrate_threshold, fit, score

logger = logging.getLogger(__name__)

DEFAULT_GRIDS = {
    "gmm": {"n_components": [3, 5, 7, 10, 20, 30, 40], "covariance_type": ["diag", "spherical"]},
    "da": {"hidden_ratio": [0.1, 0.3, 0.5], "learning_rate": [0.0001, 0.001],
           "corruption_level": [0.05, 0.1, 0.2], "activation": ["relu", "tanh"], "l2_reg": [0.0001, 0.001]},
    "kit": {"maxAE": [1, 10], "learning_rate": [0.001, 0.01], "hidden_ratio": [0.25, 0.5]},
}


def combinations(grid: dict) -> list[dict]:
    if not grid:
        return [{}]
    for k, v in grid.items():
        if not isinstance(v, (list, tuple)) or not v:
            raise ValueError(f"grid axis {k!r} must be a non-empty list")
    keys = list(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


@dataclass
class GridCell:
    kind: str
    hyperparams: dict
    fpr_target: float
    threshold: float | None = None
    fpr: float | None = None
    tpr: float | None = None
    error: str | None = None
    fit_seconds: float = 0.0

    def rank_key(self):
        if self.error is not None:
            return (1, np.inf, 0.0)
        return (0, self.fpr, -(self.tpr or 0.0))

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class GridResult:
    kind: str
    cells: list = field(default_factory=list)
    fitted: int = 0
    failures: int = 0
    holdout: list = field(default_factory=list)

    def ranked(self, fpr_target=None) -> list:
        cells = [c for c in self.cells if fpr_target is None or c.fpr_target == fpr_target]
        return sorted(cells, key=GridCell.rank_key)

    def best(self, fpr_target=None) -> GridCell | None:
        r = [c for c in self.ranked(fpr_target) if c.error is None]
        return r[0] if r else None

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "fitted": self.fitted, "failures": self.failures,
                           "holdout": self.holdout, "cells": [c.to_dict() for c in self.ranked()]}, indent=2)


def _run_cell(args):
    kind, hp, train, val_benign, val_attack, targets, seed = args
    t0 = time.perf_counter()
    try:
        model = fit(kind, train, hp, seed)
    except Exception as exc:  # a failed cell is recorded, never fatal
        return False, [GridCell(kind, hp, t, error=f"{type(exc).__name__}: {exc}") for t in targets]
    secs = time.perf_counter() - t0
    sb = score(model, val_benign)
    sa = score(model, val_attack) if val_attack is not None and len(val_attack) else np.empty(0)
    cells = []
    for t in targets:
        th = calibrate_threshold(sb, t)
        tpr = float(np.mean(sa > th.value)) if sa.size else 0.0
        cells.append(GridCell(kind, hp, t, th.value, th.calibration_fpr, tpr, None, secs))
    return True, cells


def grid_search(kind: str, train, val_benign, val_attack=None, val_attack_labels=None, grid: dict | None = None,
                fpr_targets=FPR_TARGETS, seed: int = 0, workers: int = 1, holdout=()) -> GridResult:
    """Fit every combination; calibrate on benign validation, measure TPR on validation attacks.

    ``holdout`` names attack labels withheld from selection, so the chosen model
    is tested on attacks it was never tuned for.
    """
    grid = DEFAULT_GRIDS[kind] if grid is None else grid
    combos = combinations(grid)
    if val_attack is not None and holdout:
        if val_attack_labels is None:
            raise ValueError("holdout needs val_attack_labels")
        keep = np.array([lab not in set(holdout) for lab in val_attack_labels], dtype=bool)
        val_attack = np.asarray(val_attack)[keep]
    jobs = [(kind, hp, train, val_benign, val_attack, tuple(fpr_targets), seed) for hp in combos]
    result = GridResult(kind, holdout=list(holdout))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(_run_cell, jobs))
    else:
        outcomes = [_run_cell(j) for j in jobs]
    for ok, cells in outcomes:
        result.fitted += ok
        result.failures += not ok
        result.cells.extend(cells)
    logger.info("%s grid: %d combinations, %d fitted, %d failed", kind, len(combos), result.fitted, result.failures)
    return result
