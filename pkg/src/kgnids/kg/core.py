"""Typed knowledge graph of attack strategies.

Four node kinds (strategy, repository, family, cluster) connected by a closed
set of five edge labels.  The graph keeps the repository links of every
strategy mirrored in both directions and refuses nodes that point at
something that does not exist yet.
"""

from __future__ import annotations

import enum
import io
import xml.sax
import xml.sax.handler
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Union
import xml.etree.ElementTree as ET


class EdgeLabel(str, enum.Enum):
    STRATEGY_IN_REPO = "STRATEGY_IN_REPO"
    REPO_HAS_STRATEGY = "REPO_HAS_STRATEGY"
    STRATEGY_IN_CLUSTER = "STRATEGY_IN_CLUSTER"
    STRATEGY_IN_FAMILY = "STRATEGY_IN_FAMILY"
    REPO_IN_FAMILY = "REPO_IN_FAMILY"


class GraphError(ValueError):
    """Raised when a mutation would break the graph invariants."""


class GraphMLError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class FamilyNode:
    id: str
    name: str
    kind = "family"


@dataclass(frozen=True)
class RepositoryNode:
    id: str
    uri: str
    family_id: str
    kind = "repository"


@dataclass(frozen=True)
class StrategyNode:
    id: str
    name: str
    description: str
    family_id: str
    repo_id: str
    kind = "strategy"


@dataclass(frozen=True)
class ClusterNode:
    id: str
    member_ids: frozenset
    representative_id: str
    kind = "cluster"

    def __post_init__(self):
        object.__setattr__(self, "member_ids", frozenset(self.member_ids))


Node = Union[FamilyNode, RepositoryNode, StrategyNode, ClusterNode]

# (label) -> (source kind, target kind)
EDGE_TYPES = {
    EdgeLabel.STRATEGY_IN_REPO: ("strategy", "repository"),
    EdgeLabel.REPO_HAS_STRATEGY: ("repository", "strategy"),
    EdgeLabel.STRATEGY_IN_CLUSTER: ("strategy", "cluster"),
    EdgeLabel.STRATEGY_IN_FAMILY: ("strategy", "family"),
    EdgeLabel.REPO_IN_FAMILY: ("repository", "family"),
}


@dataclass(frozen=True, order=True)
class Edge:
    source: str
    label: EdgeLabel
    target: str


@dataclass
class KnowledgeGraph:
    nodes: dict = field(default_factory=dict)
    edges: set = field(default_factory=set)

    # -- queries -----------------------------------------------------------

    def _of_kind(self, kind):
        return [n for n in self.nodes.values() if n.kind == kind]

    @property
    def families(self) -> list[FamilyNode]:
        return self._of_kind("family")

    @property
    def repositories(self) -> list[RepositoryNode]:
        return self._of_kind("repository")

    @property
    def strategies(self) -> list[StrategyNode]:
        return self._of_kind("strategy")

    @property
    def clusters(self) -> list[ClusterNode]:
        return self._of_kind("cluster")

    def get(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise KeyError(f"unknown node {node_id!r}") from None

    def out_edges(self, node_id: str, label: EdgeLabel | None = None) -> list[Edge]:
        return sorted(e for e in self.edges
                      if e.source == node_id and (label is None or e.label == label))

    def in_edges(self, node_id: str, label: EdgeLabel | None = None) -> list[Edge]:
        return sorted(e for e in self.edges
                      if e.target == node_id and (label is None or e.label == label))

    def cluster_of(self) -> dict[str, str]:
        """Map strategy id -> cluster id for every clustered strategy."""
        return {m: c.id for c in self.clusters for m in c.member_ids}

    def __len__(self):
        return len(self.nodes)

    # -- mutation ----------------------------------------------------------

    def add_node(self, node: Node) -> str:
        """Insert ``node`` and the edges implied by its references."""
        if node.id in self.nodes:
            raise GraphError(f"duplicate node id {node.id!r}")
        if isinstance(node, StrategyNode):
            if not node.name:
                raise GraphError(f"strategy {node.id!r} has an empty name")
            self._require(node.repo_id, "repository", "dangling repo reference")
            self._require(node.family_id, "family", "dangling family reference")
            self.nodes[node.id] = node
            self.edges.add(Edge(node.id, EdgeLabel.STRATEGY_IN_REPO, node.repo_id))
            self.edges.add(Edge(node.repo_id, EdgeLabel.REPO_HAS_STRATEGY, node.id))
            self.edges.add(Edge(node.id, EdgeLabel.STRATEGY_IN_FAMILY, node.family_id))
        elif isinstance(node, RepositoryNode):
            if not node.uri:
                raise GraphError(f"repository {node.id!r} has an empty uri")
            self._require(node.family_id, "family", "dangling family reference")
            self.nodes[node.id] = node
            self.edges.add(Edge(node.id, EdgeLabel.REPO_IN_FAMILY, node.family_id))
        elif isinstance(node, FamilyNode):
            if any(f.name == node.name for f in self.families):
                raise GraphError(f"family name {node.name!r} already used")
            self.nodes[node.id] = node
        elif isinstance(node, ClusterNode):
            if not node.member_ids:
                raise GraphError(f"cluster {node.id!r} has no members")
            if node.representative_id not in node.member_ids:
                raise GraphError(f"cluster {node.id!r}: representative is not a member")
            taken = self.cluster_of()
            for m in sorted(node.member_ids):
                self._require(m, "strategy", "dangling strategy reference")
                if m in taken:
                    raise GraphError(f"strategy {m!r} already in cluster {taken[m]!r}")
            self.nodes[node.id] = node
            for m in node.member_ids:
                self.edges.add(Edge(m, EdgeLabel.STRATEGY_IN_CLUSTER, node.id))
        else:
            raise TypeError(f"not a graph node: {node!r}")
        return node.id

    def _require(self, node_id, kind, message):
        node = self.nodes.get(node_id)
        if node is None or node.kind != kind:
            raise GraphError(f"{message}: {node_id!r}")

    def add_edge(self, source: str, label, target: str) -> Edge:
        """Raw edge insertion; no invariant checks (see :func:`validate`)."""
        edge = Edge(source, EdgeLabel(label), target)
        self.edges.add(edge)
        return edge

    def remove_node(self, node_id: str, cascade: bool = False) -> Node:
        node = self.nodes.pop(node_id)
        if cascade:
            self.edges = {e for e in self.edges if node_id not in (e.source, e.target)}
        return node

    def merge(self, other: "KnowledgeGraph") -> None:
        """Absorb ``other``; nodes with equal ids must be identical."""
        for nid, node in other.nodes.items():
            mine = self.nodes.get(nid)
            if mine is not None and mine != node:
                raise GraphError(f"conflicting definitions for node {nid!r}")
            if mine is None and node.kind == "family":
                clash = [f for f in self.families if f.name == node.name]
                if clash:
                    raise GraphError(f"family name {node.name!r} used by {clash[0].id!r}")
            self.nodes[nid] = node
        self.edges |= other.edges

    def copy(self) -> "KnowledgeGraph":
        return KnowledgeGraph(dict(self.nodes), set(self.edges))

    def __eq__(self, other):
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges


def validate(graph: KnowledgeGraph) -> list[str]:
    """Return one human-readable line per broken invariant; empty means valid."""
    problems = []
    nodes = graph.nodes

    for e in sorted(graph.edges):
        missing = [x for x in (e.source, e.target) if x not in nodes]
        if missing:
            problems.append(f"dangling endpoint: edge ({e.source}, {e.label.value}, {e.target}) "
                            f"refers to missing {', '.join(missing)}")
            continue
        want = EDGE_TYPES[e.label]
        got = (nodes[e.source].kind, nodes[e.target].kind)
        if got != want:
            problems.append(f"edge typing: {e.label.value} must link {want[0]}->{want[1]}, "
                            f"got {e.source} ({got[0]}) -> {e.target} ({got[1]})")

    sr = defaultdict(list)
    for e in graph.edges:
        if e.label is EdgeLabel.STRATEGY_IN_REPO:
            sr[e.source].append(e.target)
        elif e.label is EdgeLabel.REPO_HAS_STRATEGY:
            if Edge(e.target, EdgeLabel.STRATEGY_IN_REPO, e.source) not in graph.edges:
                problems.append(f"mirror: ({e.source}, REPO_HAS_STRATEGY, {e.target}) "
                                f"has no STRATEGY_IN_REPO counterpart")
    for e in graph.edges:
        if (e.label is EdgeLabel.STRATEGY_IN_REPO
                and Edge(e.target, EdgeLabel.REPO_HAS_STRATEGY, e.source) not in graph.edges):
            problems.append(f"mirror: ({e.source}, STRATEGY_IN_REPO, {e.target}) "
                            f"has no REPO_HAS_STRATEGY counterpart")

    family_names = Counter(f.name for f in graph.families)
    for name, n in sorted(family_names.items()):
        if n > 1:
            problems.append(f"family name {name!r} used by {n} families")

    for r in sorted(graph.repositories, key=lambda n: n.id):
        if not r.uri:
            problems.append(f"repository {r.id}: empty uri")
        if r.family_id not in nodes or nodes[r.family_id].kind != "family":
            problems.append(f"repository {r.id}: dangling family reference {r.family_id}")

    for s in sorted(graph.strategies, key=lambda n: n.id):
        if not s.name:
            problems.append(f"strategy {s.id}: empty name")
        repos = sorted(sr.get(s.id, []))
        if len(repos) != 1:
            problems.append(f"functional property: strategy {s.id} has {len(repos)} "
                            f"STRATEGY_IN_REPO edges (expected exactly 1)")
        if s.repo_id not in nodes or nodes[s.repo_id].kind != "repository":
            problems.append(f"strategy {s.id}: dangling repo reference {s.repo_id}")
        elif len(repos) == 1 and repos[0] != s.repo_id:
            problems.append(f"strategy {s.id}: repo_id {s.repo_id} disagrees with edge to {repos[0]}")
        elif nodes[s.repo_id].family_id != s.family_id:
            problems.append(f"family consistency: strategy {s.id} in {s.family_id} but its "
                            f"repository {s.repo_id} in {nodes[s.repo_id].family_id}")
        if s.family_id not in nodes or nodes[s.family_id].kind != "family":
            problems.append(f"strategy {s.id}: dangling family reference {s.family_id}")

    seen = {}
    for c in sorted(graph.clusters, key=lambda n: n.id):
        if not c.member_ids:
            problems.append(f"cluster {c.id}: no members")
        if c.representative_id not in c.member_ids:
            problems.append(f"cluster {c.id}: representative {c.representative_id} is not a member")
        for m in sorted(c.member_ids):
            if m not in nodes or nodes[m].kind != "strategy":
                problems.append(f"cluster {c.id}: dangling strategy reference {m}")
            if m in seen:
                problems.append(f"strategy {m} belongs to clusters {seen[m]} and {c.id}")
            seen[m] = c.id
    for e in sorted(graph.edges):
        if e.label is EdgeLabel.STRATEGY_IN_CLUSTER and e.target in nodes:
            c = nodes[e.target]
            if c.kind == "cluster" and e.source not in c.member_ids:
                problems.append(f"cluster {c.id}: edge from non-member {e.source}")
    return problems


# -- GraphML -------------------------------------------------------------------

GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"
NODE_KEYS = ("kind", "name", "description", "uri", "family", "representative")
EDGE_KEYS = ("label",)


def export_graphml(graph: KnowledgeGraph) -> str:
    ET.register_namespace("", GRAPHML_NS)
    root = ET.Element(f"{{{GRAPHML_NS}}}graphml")
    for key in NODE_KEYS:
        ET.SubElement(root, f"{{{GRAPHML_NS}}}key", id=key, attrib={
            "for": "node", "attr.name": key, "attr.type": "string"})
    for key in EDGE_KEYS:
        ET.SubElement(root, f"{{{GRAPHML_NS}}}key", id=key, attrib={
            "for": "edge", "attr.name": key, "attr.type": "string"})
    g = ET.SubElement(root, f"{{{GRAPHML_NS}}}graph", id="G", edgedefault="directed")

    def data(parent, key, value):
        el = ET.SubElement(parent, f"{{{GRAPHML_NS}}}data", key=key)
        el.text = value

    for nid in sorted(graph.nodes):
        n = graph.nodes[nid]
        el = ET.SubElement(g, f"{{{GRAPHML_NS}}}node", id=nid)
        data(el, "kind", n.kind)
        if n.kind == "family":
            data(el, "name", n.name)
        elif n.kind == "repository":
            data(el, "uri", n.uri)
            data(el, "family", n.family_id)
        elif n.kind == "strategy":
            data(el, "name", n.name)
            data(el, "description", n.description)
            data(el, "family", n.family_id)
        else:
            data(el, "representative", n.representative_id)
    for i, e in enumerate(sorted(graph.edges)):
        el = ET.SubElement(g, f"{{{GRAPHML_NS}}}edge", id=f"e{i}", source=e.source, target=e.target)
        data(el, "label", e.label.value)
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


class _GraphMLHandler(xml.sax.handler.ContentHandler):
    def __init__(self):
        super().__init__()
        self.nodes = []   # (line, id, {key: value})
        self.edges = []   # (line, source, target, {key: value})
        self._current = None
        self._key = None
        self._text = []

    def _line(self):
        return self._locator.getLineNumber() if self._locator else None

    def startElementNS(self, name, qname, attrs):
        _, local = name
        get = lambda k: attrs.get((None, k))
        if local == "node":
            self._current = (self._line(), get("id"), {})
            self.nodes.append(self._current)
        elif local == "edge":
            self._current = (self._line(), get("source"), get("target"), {})
            self.edges.append(self._current)
        elif local == "data":
            self._key = get("key")
            self._text = []

    def characters(self, content):
        if self._key is not None:
            self._text.append(content)

    def endElementNS(self, name, qname):
        _, local = name
        if local == "data" and self._current is not None:
            self._current[-1][self._key] = "".join(self._text)
            self._key = None
        elif local in ("node", "edge"):
            self._current = None


def import_graphml(text: str) -> KnowledgeGraph:
    """Parse a document written by :func:`export_graphml` and validate it."""
    handler = _GraphMLHandler()
    parser = xml.sax.make_parser()
    parser.setFeature(xml.sax.handler.feature_namespaces, True)
    parser.setFeature(xml.sax.handler.feature_external_ges, False)
    parser.setContentHandler(handler)
    try:
        parser.parse(io.BytesIO(text.encode("utf-8")))
    except xml.sax.SAXParseException as exc:
        raise GraphMLError(f"malformed XML: {exc.getMessage()}", exc.getLineNumber()) from exc

    graph = KnowledgeGraph()
    members = defaultdict(set)
    repo_of = {}
    for line, source, target, attrs in handler.edges:
        label = attrs.get("label", "")
        if label not in EdgeLabel.__members__:
            raise GraphMLError(f"unknown edge label {label}", line)
        if source is None or target is None:
            raise GraphMLError("edge without source/target", line)
        graph.edges.add(Edge(source, EdgeLabel(label), target))
        if label == "STRATEGY_IN_CLUSTER":
            members[target].add(source)
        elif label == "STRATEGY_IN_REPO":
            repo_of.setdefault(source, target)

    for line, nid, attrs in handler.nodes:
        if not nid:
            raise GraphMLError("node without id", line)
        if nid in graph.nodes:
            raise GraphMLError(f"duplicate node id {nid}", line)
        kind = attrs.get("kind")
        try:
            if kind == "family":
                node = FamilyNode(nid, attrs["name"])
            elif kind == "repository":
                node = RepositoryNode(nid, attrs["uri"], attrs["family"])
            elif kind == "strategy":
                node = StrategyNode(nid, attrs["name"], attrs.get("description", ""),
                                    attrs["family"], repo_of.get(nid, ""))
            elif kind == "cluster":
                node = ClusterNode(nid, frozenset(members.get(nid, ())), attrs["representative"])
            else:
                raise GraphMLError(f"unknown node kind {kind!r}", line)
        except KeyError as exc:
            raise GraphMLError(f"node {nid}: missing attribute {exc.args[0]}", line) from None
        graph.nodes[nid] = node

    problems = validate(graph)
    if problems:
        raise GraphMLError("invalid graph: " + "; ".join(problems))
    return graph


def read_graphml(path) -> KnowledgeGraph:
    with open(path, encoding="utf-8") as fh:
        return import_graphml(fh.read())


def write_graphml(graph: KnowledgeGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(export_graphml(graph))


def strategies_by_repo(graph: KnowledgeGraph) -> dict[str, set[str]]:
    out = defaultdict(set)
    for e in graph.edges:
        if e.label is EdgeLabel.STRATEGY_IN_REPO:
            out[e.target].add(e.source)
    return out


def iter_strategy_ids(graph: KnowledgeGraph) -> Iterable[str]:
    return sorted(s.id for s in graph.strategies)
