"""Merge semantically equivalent strategies into clusters.

Agglomeration is complete linkage with a distance cut: clusters keep merging
while the closest pair (by the farthest-member distance) is within the
threshold.  Each cluster elects the member with the smallest summed distance
to the other members as its representative.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .clients import EmbeddingClient
from .core import ClusterNode, KnowledgeGraph, StrategyNode


class Metric(str, enum.Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class StrategyEmbedding:
    strategy_id: str
    vector: tuple

    def __post_init__(self):
        object.__setattr__(self, "vector", tuple(float(v) for v in self.vector))
        if not all(math.isfinite(v) for v in self.vector):
            raise ValueError(f"non-finite embedding for {self.strategy_id}")


@dataclass(frozen=True)
class ClusteringConfig:
    distance_metric: Metric = Metric.COSINE
    cut_threshold: float = 0.3
    linkage: str = "complete"

    def __post_init__(self):
        object.__setattr__(self, "distance_metric", Metric(self.distance_metric))
        if self.linkage != "complete":
            raise ValueError("only complete linkage is supported")
        if not self.cut_threshold > 0:
            raise ValueError("cut_threshold must be > 0")


class EmbeddingError(ValueError):
    pass


def embed_strategies(strategies: list[StrategyNode], client: EmbeddingClient) -> list[StrategyEmbedding]:
    if not strategies:
        return []
    for s in strategies:
        if not s.name:
            raise EmbeddingError(f"strategy {s.id} has an empty name")
    vectors = client.embed([f"{s.name} {s.description}".strip() for s in strategies])
    if len(vectors) != len(strategies):
        raise EmbeddingError(f"got {len(vectors)} vectors for {len(strategies)} strategies")
    dim = len(vectors[0])
    out = []
    for s, v in zip(strategies, vectors):
        if len(v) != dim:
            raise EmbeddingError(f"dimension mismatch: {s.id} has {len(v)}, expected {dim}")
        out.append(StrategyEmbedding(s.id, v))
    return out


def pairwise_distances(x: np.ndarray, metric: Metric | str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if Metric(metric) is Metric.COSINE:
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        u = x / np.where(norms == 0, 1.0, norms)
        d = 1.0 - u @ u.T
        d = np.clip((d + d.T) / 2, 0.0, 2.0)
    else:
        sq = np.sum(x * x, axis=1)
        d = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2 * x @ x.T, 0.0))
        # recompute exactly for small inputs; the Gram form loses precision
        if len(x) <= 2048:
            diff = x[:, None, :] - x[None, :, :]
            d = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(d, 0.0)
    return d


def _agglomerate(d: np.ndarray, threshold: float) -> list[list[int]]:
    """Complete-linkage merging on a distance matrix whose index order is the tie-break order."""
    n = len(d)
    d = d.astype(float).copy()
    np.fill_diagonal(d, np.inf)
    active = np.ones(n, dtype=bool)
    members = {i: [i] for i in range(n)}
    nn = np.argmin(d, axis=1) if n > 1 else np.zeros(1, dtype=int)
    nn_d = d[np.arange(n), nn] if n > 1 else np.full(1, np.inf)
    while len(members) > 1:
        a = int(np.argmin(np.where(active, nn_d, np.inf)))
        if not nn_d[a] <= threshold:
            break
        b = int(nn[a])
        a, b = min(a, b), max(a, b)
        members[a] += members.pop(b)
        active[b] = False
        merged = np.maximum(d[a], d[b])
        d[a, :] = merged
        d[:, a] = merged
        d[a, a] = np.inf
        d[b, :] = np.inf
        d[:, b] = np.inf
        nn_d[b] = np.inf
        # rows whose nearest neighbour was a or b must rescan; others only saw distances grow
        stale = np.flatnonzero(active & ((nn == a) | (nn == b)))
        # exact ties with the merged column must still resolve to the lowest index
        tie = active & (merged == nn_d) & (nn > a)
        nn[tie] = a
        for r in set(stale.tolist()) | {a}:
            nn[r] = int(np.argmin(d[r]))
            nn_d[r] = d[r, nn[r]]
    return [sorted(m) for m in members.values()]


def cluster(embeddings: list[StrategyEmbedding], config: ClusteringConfig | None = None) -> list[set]:
    """Partition strategy ids by complete-linkage agglomeration.

    Ties between equally distant candidate merges go to the pair whose
    smallest member ids sort first, so the result does not depend on input order.
    """
    cfg = config or ClusteringConfig()
    if not embeddings:
        raise ValueError("cannot cluster an empty embedding list")
    dims = {len(e.vector) for e in embeddings}
    if len(dims) != 1:
        raise EmbeddingError(f"mixed embedding dimensions {sorted(dims)}")
    ordered = sorted(embeddings, key=lambda e: e.strategy_id)
    ids = [e.strategy_id for e in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate strategy ids")
    x = np.array([e.vector for e in ordered])
    groups = _agglomerate(pairwise_distances(x, cfg.distance_metric), cfg.cut_threshold)
    return sorted(({ids[i] for i in g} for g in groups), key=min)


def select_representative(members: list[StrategyEmbedding], metric: Metric | str = Metric.COSINE) -> str:
    if not members:
        raise ValueError("empty cluster")
    ordered = sorted(members, key=lambda e: e.strategy_id)
    totals = pairwise_distances(np.array([e.vector for e in ordered]), metric).sum(axis=1)
    best = totals.min()
    tol = 1e-12 * max(1.0, abs(best))
    for e, t in zip(ordered, totals):
        if t <= best + tol:
            return e.strategy_id


def compress(graph: KnowledgeGraph, embeddings: list[StrategyEmbedding],
             config: ClusteringConfig | None = None) -> KnowledgeGraph:
    """Return a copy of ``graph`` with one cluster node per group of similar strategies."""
    cfg = config or ClusteringConfig()
    out = graph.copy()
    for c in out.clusters:
        out.remove_node(c.id, cascade=True)
    if not embeddings:
        return out
    by_id = {e.strategy_id: e for e in embeddings}
    missing = sorted(s.id for s in out.strategies if s.id not in by_id)
    if missing:
        raise ValueError(f"no embedding for strategies {missing[:5]}")
    groups = cluster([by_id[s.id] for s in out.strategies], cfg)
    for i, group in enumerate(groups):
        rep = select_representative([by_id[m] for m in group], cfg.distance_metric)
        out.add_node(ClusterNode(f"cluster:{i:05d}", frozenset(group), rep))
    return out
