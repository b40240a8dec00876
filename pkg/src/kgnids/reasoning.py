"""Symbolic rules over a (compressed) strategy graph.

* frequency: share of repositories implementing a strategy, counted over its
  whole cluster when the graph has been compressed;
* transitive closure: strategies reachable through shared repositories or
  shared clusters;
* cross-family invariants: clusters whose repositories span several families.
"""

from __future__ import annotations

import json
from collections import defaultdict, deque
from dataclasses import dataclass, field

from .kg.core import EdgeLabel, KnowledgeGraph


class ReasoningError(ValueError):
    pass


class _Index:
    """Adjacency lookups built once per graph."""

    def __init__(self, graph: KnowledgeGraph):
        self.graph = graph
        self.strategy_ids = sorted(s.id for s in graph.strategies)
        self.repos = sorted(r.id for r in graph.repositories)
        self.repo_family = {r.id: r.family_id for r in graph.repositories}
        self.repos_of = defaultdict(set)       # strategy -> repos (E_SR)
        self.strategies_in = defaultdict(set)  # repo -> strategies (E_RS)
        for e in graph.edges:
            if e.label is EdgeLabel.STRATEGY_IN_REPO:
                self.repos_of[e.source].add(e.target)
            elif e.label is EdgeLabel.REPO_HAS_STRATEGY:
                self.strategies_in[e.source].add(e.target)
        self.cluster_of = graph.cluster_of()
        self.members = {c.id: set(c.member_ids) for c in graph.clusters}

    def require(self, sid):
        if sid not in self.graph.nodes or self.graph.nodes[sid].kind != "strategy":
            raise ReasoningError(f"unknown strategy {sid!r}")

    def group(self, sid) -> set:
        cid = self.cluster_of.get(sid)
        return set(self.members[cid]) if cid else {sid}

    def neighbours(self, sid) -> set:
        out = set()
        for r in self.repos_of.get(sid, ()):
            out |= self.strategies_in.get(r, set())
        cid = self.cluster_of.get(sid)
        if cid:
            out |= self.members[cid]
        out.discard(sid)
        return out


def frequency(graph: KnowledgeGraph, strategy_id: str, _index: _Index | None = None) -> float:
    idx = _index or _Index(graph)
    idx.require(strategy_id)
    if not idx.repos:
        raise ReasoningError("graph has no repositories")
    hit = set()
    for m in idx.group(strategy_id):
        hit |= idx.repos_of.get(m, set())
    return len(hit) / len(idx.repos)


def transitive_closure(graph: KnowledgeGraph, strategy_id: str, _index: _Index | None = None) -> set:
    idx = _index or _Index(graph)
    idx.require(strategy_id)
    seen = {strategy_id}
    queue = deque([strategy_id])
    while queue:
        for nxt in idx.neighbours(queue.popleft()):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    seen.discard(strategy_id)
    return seen


def cross_family_invariants(graph: KnowledgeGraph, min_families: int = 2, strict: bool = False,
                            _index: _Index | None = None) -> set:
    """Strategies whose cluster shows up in at least ``min_families`` families.

    ``strict`` raises the bar to every family in the graph.
    """
    if min_families < 2:
        raise ReasoningError("min_families must be >= 2")
    idx = _index or _Index(graph)
    if strict:
        min_families = max(min_families, len(graph.families))
    out = set()
    done = set()
    for sid in idx.strategy_ids:
        if sid in done:
            continue
        group = idx.group(sid)
        done |= group
        fams = {idx.repo_family[r] for m in group for r in idx.repos_of.get(m, ())
                if r in idx.repo_family}
        if len(fams) >= min_families:
            out |= group
    return out


@dataclass
class RuleReport:
    frequencies: dict = field(default_factory=dict)
    transitive_sets: dict = field(default_factory=dict)
    invariant_strategies: set = field(default_factory=set)
    strict: bool = False

    def to_json(self) -> str:
        return json.dumps({
            "frequencies": {k: self.frequencies[k] for k in sorted(self.frequencies)},
            "transitive": {k: sorted(v) for k, v in sorted(self.transitive_sets.items())},
            "invariants": sorted(self.invariant_strategies),
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RuleReport":
        obj = json.loads(text)
        return cls({k: float(v) for k, v in obj["frequencies"].items()},
                   {k: set(v) for k, v in obj["transitive"].items()},
                   set(obj["invariants"]))

    def pairs(self) -> list[tuple[str, str]]:
        """Unordered strategy pairs implied by the transitive sets."""
        out = set()
        for a, others in self.transitive_sets.items():
            for b in others:
                out.add((a, b) if a < b else (b, a))
        return sorted(out)


def apply_rules(graph: KnowledgeGraph, min_families: int = 2, strict: bool = False) -> RuleReport:
    idx = _Index(graph)
    report = RuleReport(strict=strict)
    if idx.repos:
        report.frequencies = {s: frequency(graph, s, idx) for s in idx.strategy_ids}
    # closure is shared by every member of a connected component
    for s in idx.strategy_ids:
        if s in report.transitive_sets:
            continue
        comp = transitive_closure(graph, s, idx) | {s}
        for m in comp:
            report.transitive_sets[m] = comp - {m}
    report.invariant_strategies = cross_family_invariants(graph, min_families, strict, idx)
    return report
