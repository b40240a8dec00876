"""Unsupervised anomaly detectors and threshold calibration."""

from __future__ import annotations

import json

import numpy as np

from .autoencoder import DaModel, fit_da
from .base import MODEL_FORMAT, DetectorError, DimensionError, MinMaxScaler
from .ensemble import EnsembleModel, fit_ensemble
from .gmm import GmmModel, fit_gmm
from .threshold import FPR_TARGETS, Threshold, calibrate_threshold

KINDS = ("gmm", "da", "kit")

# hyperparameter names accepted per model kind, mapped onto fit-function arguments
_ARGS = {
    "gmm": {"n_components": "n_components", "covariance_type": "covariance_type"},
    "da": {"hidden_ratio": "hidden_ratio", "learning_rate": "learning_rate", "corruption_level": "corruption_level",
           "activation": "activation", "l2_reg": "l2_reg", "epochs": "epochs", "batch_size": "batch_size"},
    "kit": {"maxAE": "max_ae", "learning_rate": "learning_rate", "hidden_ratio": "hidden_ratio",
            "corruption_level": "corruption_level", "activation": "activation", "l2_reg": "l2_reg",
            "epochs": "epochs", "batch_size": "batch_size"},
}
_FIT = {"gmm": fit_gmm, "da": fit_da, "kit": fit_ensemble}
_CLASSES = {"gmm": GmmModel, "da": DaModel, "kit": EnsembleModel}


def fit(kind: str, X, hyperparams: dict | None = None, rng_seed: int = 0):
    if kind not in _FIT:
        raise DetectorError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    hp = dict(hyperparams or {})
    unknown = set(hp) - set(_ARGS[kind])
    if unknown:
        raise DetectorError(f"unknown {kind} hyperparameter(s) {sorted(unknown)}")
    return _FIT[kind](X, seed=rng_seed, **{_ARGS[kind][k]: v for k, v in hp.items()})


def score(model, X) -> np.ndarray:
    """Anomaly scores (higher is more anomalous) for each row of ``X``."""
    return model.score_samples(X)


def model_to_json(model) -> str:
    d = model.to_dict()
    d["format"] = MODEL_FORMAT
    return json.dumps(d)


def model_from_json(text: str):
    d = json.loads(text)
    if d.get("format") != MODEL_FORMAT:
        raise DetectorError(f"unsupported model format {d.get('format')!r}")
    return _CLASSES[d["kind"]].from_dict(d)


def save_model(model, path, threshold: Threshold | None = None) -> None:
    d = json.loads(model_to_json(model))
    if threshold is not None:
        d["threshold"] = threshold.to_dict()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh)


def load_model(path):
    """Return (model, threshold or None)."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    th = Threshold.from_dict(d.pop("threshold")) if "threshold" in d else None
    return model_from_json(json.dumps(d)), th


__all__ = ["DaModel", "DetectorError", "DimensionError", "EnsembleModel", "FPR_TARGETS", "GmmModel", "KINDS",
           "MinMaxScaler", "Threshold", "calibrate_threshold", "fit", "fit_da", "fit_ensemble", "fit_gmm",
           "load_model", "model_from_json", "model_to_json", "save_model", "score"]
