"""Detection metrics per attack label."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..detectors import Threshold, score
from .split import is_benign

REPORT_FORMAT = "kgnids-report/1"


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass
class AttackMetrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self):
        return prf(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self):
        return prf(self.tp, self.fp, self.fn)[1]

    @property
    def f1(self):
        return prf(self.tp, self.fp, self.fn)[2]

    def to_dict(self):
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class EvalReport:
    model_id: str
    hyperparams: dict
    threshold: Threshold
    fpr: float
    n_benign: int
    false_positives: int
    per_attack: dict = field(default_factory=dict)   # label -> AttackMetrics
    overall: AttackMetrics | None = None

    def to_dict(self) -> dict:
        return {"format": REPORT_FORMAT, "model_id": self.model_id, "hyperparams": self.hyperparams,
                "threshold": self.threshold.to_dict(), "fpr": self.fpr, "n_benign": self.n_benign,
                "false_positives": self.false_positives,
                "per_attack": {k: v.to_dict() for k, v in sorted(self.per_attack.items())},
                "overall": self.overall.to_dict() if self.overall else None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        conf = lambda m: AttackMetrics(m["tp"], m["fp"], m["fn"], m["tn"])  # noqa: E731
        return cls(d["model_id"], d["hyperparams"], Threshold.from_dict(d["threshold"]), d["fpr"], d["n_benign"],
                   d["false_positives"], {k: conf(v) for k, v in d["per_attack"].items()},
                   conf(d["overall"]) if d.get("overall") else None)


def evaluate_scores(scores, threshold: Threshold, labels, model_id: str = "", hyperparams=None) -> EvalReport:
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("no test rows")
    if len(labels) != len(scores):
        raise ValueError("labels and scores differ in length")
    flagged = threshold.flags(scores)
    benign = np.array([is_benign(x) for x in labels], dtype=bool)
    fp = int(np.count_nonzero(flagged & benign))
    tn = int(np.count_nonzero(~flagged & benign))
    n_benign = int(benign.sum())
    lab = np.array([str(x) for x in labels], dtype=object)
    per = {}
    for name in sorted(set(lab[~benign])):
        m = lab == name
        tp = int(np.count_nonzero(flagged & m))
        per[name] = AttackMetrics(tp, fp, int(m.sum()) - tp, tn)
    tp_all = int(np.count_nonzero(flagged & ~benign))
    overall = AttackMetrics(tp_all, fp, int((~benign).sum()) - tp_all, tn)
    return EvalReport(model_id, dict(hyperparams or {}), threshold, fp / n_benign if n_benign else 0.0,
                      n_benign, fp, per, overall)


def evaluate(model, threshold: Threshold, X, labels, model_id: str = "", hyperparams=None) -> EvalReport:
    X = np.asarray(X, dtype=float)
    if len(X) == 0:
        raise ValueError("no test rows")
    hp = hyperparams if hyperparams is not None else model.hyperparams()
    return evaluate_scores(score(model, X), threshold, labels, model_id or model.kind, hp)
