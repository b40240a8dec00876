"""Plain-text and plot renderings of evaluation reports."""

from __future__ import annotations

import logging

import numpy as np

logger = logging.getLogger(__name__)


def f1_table(reports) -> str:
    """One row per (model, attack); one F1 column per FPR target.

    ``reports`` is an iterable of :class:`EvalReport`.
    """
    reports = list(reports)
    targets = sorted({r.threshold.fpr_target for r in reports})
    cells = {}
    for r in reports:
        for attack, m in r.per_attack.items():
            cells[(r.model_id, attack, r.threshold.fpr_target)] = m.f1
    rows = sorted({(m, a) for m, a, _ in cells})
    head = ["model", "attack"] + [f"F1@FPR={t * 100:g}%" for t in targets]
    body = [[m, a] + [f"{cells[(m, a, t)]:.3f}" if (m, a, t) in cells else "-" for t in targets] for m, a in rows]
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)] if body else [len(h) for h in head]
    line = lambda vals: "  ".join(str(v).ljust(w) for v, w in zip(vals, widths))  # noqa: E731
    out = [line(head), line(["-" * w for w in widths])] + [line(b) for b in body]
    fprs = ", ".join(f"{r.model_id}@{r.threshold.fpr_target:g}: {r.fpr:.5f}" for r in reports)
    out.append(f"benign FPR: {fprs}")
    return "\n".join(out) + "\n"


def plot_scores(scores, labels, threshold: float | None, path) -> None:
    """Histogram of anomaly scores per label, written to ``path``."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:  # plotting is optional
        raise RuntimeError("plotting needs matplotlib (pip install .[plot])") from exc
    scores = np.asarray(scores, dtype=float)
    labels = np.array([str(x) for x in labels], dtype=object)
    fig, ax = plt.subplots(figsize=(7, 4))
    bins = np.histogram_bin_edges(scores, bins=60)
    for name in sorted(set(labels)):
        ax.hist(scores[labels == name], bins=bins, alpha=0.5, label=name, log=True)
    if threshold is not None:
        ax.axvline(threshold, color="k", linestyle="--", label="threshold")
    ax.set_xlabel("anomaly score")
    ax.set_ylabel("count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
