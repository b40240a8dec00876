"""Turn reasoning output into an ordered feature schema.

Three feature families are produced:

* direct features, one per catalog entry matched by at least one strategy;
* composite features, one per pair of co-reachable strategies whose catalog
  entries both have a boolean form; the feature counts packets satisfying
  both conditions;
* destination twins of the direct features of cross-family strategies.

Every strategy or pair handed in either yields a feature or a report entry.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field

from .catalog import Catalog, CatalogEntry
from .expr import Expression, ExpressionError, conjoin

logger = logging.getLogger(__name__)

SCHEMA_FORMAT = "kgnids-schema/1"


class Scope(str, enum.Enum):
    CHANNEL = "channel"
    DESTINATION = "destination"


class Kind(str, enum.Enum):
    DIRECT = "direct"
    COMPOSITE = "composite"
    AGGREGATED = "aggregated"


class Stat(str, enum.Enum):
    W = "W"
    CS = "CS"
    MEAN = "MEAN"
    SSR = "SSR"
    STD = "STD"


STAT_ORDER = (Stat.W, Stat.CS, Stat.MEAN, Stat.SSR, Stat.STD)
DEFAULT_STATS = (Stat.W, Stat.MEAN, Stat.STD)


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    scope: Scope
    value_expr: str
    predicate: str | None = None
    kind: Kind = Kind.DIRECT
    source_strategy_ids: frozenset = frozenset()
    base: str | None = None     # channel spec whose CS changes feed this destination spec
    category: str = ""

    def __post_init__(self):
        object.__setattr__(self, "scope", Scope(self.scope))
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "source_strategy_ids", frozenset(self.source_strategy_ids))
        if not self.name:
            raise SchemaError("feature name must be non-empty")
        try:
            Expression(self.value_expr)
            if self.predicate is not None and not Expression(self.predicate).is_boolean:
                raise SchemaError(f"{self.name}: predicate {self.predicate!r} is not boolean")
        except ExpressionError as exc:
            raise SchemaError(f"{self.name}: {exc}") from None
        if self.kind is Kind.COMPOSITE and len(self.source_strategy_ids) < 2:
            raise SchemaError(f"{self.name}: composite feature needs two source strategies")
        if self.kind is Kind.AGGREGATED and self.scope is not Scope.DESTINATION:
            raise SchemaError(f"{self.name}: aggregated feature must be destination-scoped")
        if self.base is not None and self.scope is not Scope.DESTINATION:
            raise SchemaError(f"{self.name}: only destination features take a base")

    def to_dict(self) -> dict:
        return {"name": self.name, "scope": self.scope.value, "kind": self.kind.value,
                "value_expr": self.value_expr, "predicate": self.predicate, "base": self.base,
                "category": self.category, "source_strategy_ids": sorted(self.source_strategy_ids)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(d["name"], d["scope"], d["value_expr"], d.get("predicate"), d.get("kind", "direct"),
                   frozenset(d.get("source_strategy_ids", ())), d.get("base"), d.get("category", ""))


def _spec_from_entry(entry: CatalogEntry, sources) -> FeatureSpec:
    return FeatureSpec(entry.name, entry.scope, entry.expr, entry.when, Kind.DIRECT,
                       frozenset(sources), None, entry.category)


class Issue(str, enum.Enum):
    UNMATCHED = "unmatched"
    BELOW_MIN_FREQ = "below_min_freq"
    MERGED = "merged"                 # folded into a feature another input already produced
    NOT_CONJOINABLE = "not_conjoinable"
    SAME_FEATURE = "same_feature"
    NO_DIRECT_SPEC = "no_direct_spec"


@dataclass(frozen=True)
class ReportEntry:
    subject: tuple          # strategy id, or a pair of ids
    issue: Issue
    detail: str = ""

    def to_dict(self):
        return {"subject": list(self.subject), "issue": self.issue.value, "detail": self.detail}


@dataclass
class MappingResult:
    specs: list = field(default_factory=list)
    report: list = field(default_factory=list)
    assignment: dict = field(default_factory=dict)   # strategy id -> catalog entry name

    def issues(self, kind: Issue) -> list:
        return [r for r in self.report if r.issue is kind]


def _sid_name(s):
    if isinstance(s, tuple):
        return s[0], s[1]
    return s.id, s.name


def map_direct(strategies, catalog: Catalog, frequencies: dict | None = None,
               min_freq: float = 0.0) -> MappingResult:
    """One direct feature per catalog entry hit by the given strategies.

    ``strategies`` holds objects with ``id`` and ``name`` (or ``(id, name)``
    tuples).  ``frequencies`` maps strategy id to its repository share and is
    only consulted when ``min_freq`` > 0.
    """
    if not 0.0 <= min_freq <= 1.0:
        raise ValueError("min_freq must lie in [0, 1]")
    out = MappingResult()
    hits: dict[str, list] = {}
    for s in sorted((_sid_name(s) for s in strategies), key=lambda t: t[0]):
        sid, name = s
        if min_freq > 0:
            f = (frequencies or {}).get(sid, 0.0)
            if f < min_freq:
                out.report.append(ReportEntry((sid,), Issue.BELOW_MIN_FREQ, f"frequency {f:.4g} < {min_freq}"))
                continue
        entry = catalog.match(name)
        if entry is None:
            out.report.append(ReportEntry((sid,), Issue.UNMATCHED, name))
            continue
        out.assignment[sid] = entry.name
        hits.setdefault(entry.name, []).append(sid)
    for name in sorted(hits, key=catalog.position):
        sids = hits[name]
        out.specs.append(_spec_from_entry(catalog[name], sids))
        for sid in sids[1:]:
            out.report.append(ReportEntry((sid,), Issue.MERGED, f"shares feature {name} with {sids[0]}"))
    return out


def composite_name(a: CatalogEntry, b: CatalogEntry, catalog: Catalog) -> str:
    first, second = sorted((a, b), key=lambda e: catalog.position(e.name))
    return f"{first.alias}_{second.alias}_count"


def generate_composites(pairs, catalog: Catalog, assignment: dict | None = None) -> MappingResult:
    """Conjunction counters for pairs of related strategies.

    ``pairs`` holds 2-tuples of strategies (objects with ``id``/``name`` or
    ``(id, name)`` tuples).  ``assignment`` may pin strategy ids to catalog
    entries, e.g. from :func:`map_direct`; otherwise names are matched afresh.
    """
    out = MappingResult()
    built: dict[tuple, list] = {}
    seen_pairs = set()
    assignment = assignment or {}
    norm = []
    for a, b in pairs:
        a, b = _sid_name(a), _sid_name(b)
        if a[0] == b[0]:
            continue
        key = tuple(sorted((a, b)))
        if key not in seen_pairs:
            seen_pairs.add(key)
            norm.append(key)
    for a, b in sorted(norm):
        ids = (a[0], b[0])
        ea = catalog[assignment[a[0]]] if a[0] in assignment else catalog.match(a[1])
        eb = catalog[assignment[b[0]]] if b[0] in assignment else catalog.match(b[1])
        if ea is None or eb is None:
            missing = a[0] if ea is None else b[0]
            out.report.append(ReportEntry(ids, Issue.UNMATCHED, f"no catalog entry for {missing}"))
            continue
        if ea.name == eb.name:
            out.report.append(ReportEntry(ids, Issue.SAME_FEATURE, ea.name))
            continue
        ca, cb = ea.condition(), eb.condition()
        if ca is None or cb is None:
            numeric = ea.name if ca is None else eb.name
            out.report.append(ReportEntry(ids, Issue.NOT_CONJOINABLE, f"{numeric} has no boolean form"))
            continue
        ekey = tuple(sorted((ea.name, eb.name), key=catalog.position))
        built.setdefault(ekey, []).append(ids)
    for ekey in sorted(built, key=lambda k: (catalog.position(k[0]), catalog.position(k[1]))):
        ea, eb = catalog[ekey[0]], catalog[ekey[1]]
        pair_list = built[ekey]
        sources = set(pair_list[0])
        for ids in pair_list[1:]:
            sources |= set(ids)
            out.report.append(ReportEntry(ids, Issue.MERGED, composite_name(ea, eb, catalog)))
        out.specs.append(FeatureSpec(
            composite_name(ea, eb, catalog), Scope.CHANNEL, "1", conjoin(ea.condition(), eb.condition()).text,
            Kind.COMPOSITE, frozenset(sources), None, "composite"))
    return out


def promote_to_destination(invariant_ids, direct_specs) -> MappingResult:
    """Destination-scoped twins of the direct features of cross-family strategies."""
    out = MappingResult()
    owner = {}
    for spec in direct_specs:
        if spec.scope is Scope.CHANNEL:
            for sid in spec.source_strategy_ids:
                owner[sid] = spec
    twins: dict[str, list] = {}
    for sid in sorted(invariant_ids):
        spec = owner.get(sid)
        if spec is None:
            out.report.append(ReportEntry((sid,), Issue.NO_DIRECT_SPEC))
            continue
        twins.setdefault(spec.name, []).append(sid)
    by_name = {s.name: s for s in direct_specs}
    for name in sorted(twins):
        sids = twins[name]
        base = by_name[name]
        out.specs.append(FeatureSpec(f"{name}_dst", Scope.DESTINATION, base.value_expr, base.predicate,
                                     Kind.AGGREGATED, frozenset(sids), name, base.category))
        for sid in sids[1:]:
            out.report.append(ReportEntry((sid,), Issue.MERGED, f"{name}_dst"))
    return out


class FeatureSchema:
    """Immutable ordered feature layout: channel block, then destination block."""

    def __init__(self, specs, stat_selection=DEFAULT_STATS):
        self.specs = tuple(specs)
        stats = {Stat(s) for s in stat_selection}
        if not stats:
            raise SchemaError("stat_selection is empty")
        self.stat_selection = tuple(s for s in STAT_ORDER if s in stats)
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate feature names {dup}")
        seen_dest = False
        for s in self.specs:
            if s.scope is Scope.DESTINATION:
                seen_dest = True
            elif seen_dest:
                raise SchemaError("channel features must precede destination features")
        channel = {s.name for s in self.specs if s.scope is Scope.CHANNEL}
        for s in self.specs:
            if s.base is not None and s.base not in channel:
                raise SchemaError(f"{s.name}: base {s.base!r} is not a channel feature of this schema")

    @property
    def channel_specs(self):
        return tuple(s for s in self.specs if s.scope is Scope.CHANNEL)

    @property
    def destination_specs(self):
        return tuple(s for s in self.specs if s.scope is Scope.DESTINATION)

    @property
    def dimension(self) -> int:
        return len(self.specs) * len(self.stat_selection)

    @property
    def column_names(self) -> list[str]:
        return [f"{s.name}_{st.value}" for s in self.specs for st in self.stat_selection]

    def without(self, predicate) -> "FeatureSchema":
        """Schema minus the specs for which ``predicate(spec)`` is true (and twins of removed bases)."""
        dropped = {s.name for s in self.specs if predicate(s)}
        keep = [s for s in self.specs if s.name not in dropped and s.base not in dropped]
        return FeatureSchema(keep, self.stat_selection)

    def to_dict(self) -> dict:
        return {"format": SCHEMA_FORMAT, "stat_selection": [s.value for s in self.stat_selection],
                "dimension": self.dimension, "specs": [s.to_dict() for s in self.specs]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        if d.get("format") != SCHEMA_FORMAT:
            raise SchemaError(f"unsupported schema format {d.get('format')!r}")
        schema = cls([FeatureSpec.from_dict(s) for s in d["specs"]], d["stat_selection"])
        if d.get("dimension", schema.dimension) != schema.dimension:
            raise SchemaError("dimension field disagrees with spec list")
        return schema

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def __eq__(self, other):
        return isinstance(other, FeatureSchema) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"FeatureSchema({len(self.specs)} specs, dim={self.dimension})"


def build_schema(direct=(), composite=(), aggregated=(), stat_selection=DEFAULT_STATS) -> FeatureSchema:
    everything = list(direct) + list(composite) + list(aggregated)
    by_name = {}
    for spec in everything:
        prev = by_name.get(spec.name)
        if prev is not None:
            raise SchemaError(
                f"feature name {spec.name!r} produced twice: {prev.kind.value} from {sorted(prev.source_strategy_ids)} "
                f"and {spec.kind.value} from {sorted(spec.source_strategy_ids)}")
        by_name[spec.name] = spec
    channel = sorted((s for s in everything if s.scope is Scope.CHANNEL), key=lambda s: s.name)
    dest = sorted((s for s in everything if s.scope is Scope.DESTINATION), key=lambda s: s.name)
    return FeatureSchema(channel + dest, stat_selection)


@dataclass
class SchemaBuild:
    schema: FeatureSchema
    direct: MappingResult
    composite: MappingResult
    aggregated: MappingResult

    def report_dict(self) -> dict:
        return {"direct": [r.to_dict() for r in self.direct.report],
                "composite": [r.to_dict() for r in self.composite.report],
                "aggregated": [r.to_dict() for r in self.aggregated.report]}


def schema_from_graph(graph, rules, catalog: Catalog | None = None, min_freq: float = 0.0,
                      stat_selection=DEFAULT_STATS, composites: bool = True) -> SchemaBuild:
    """Full mapping from a compressed graph and its rule report."""
    catalog = catalog or Catalog.default()
    strategies = sorted(graph.strategies, key=lambda s: s.id)
    names = {s.id: s for s in strategies}
    direct = map_direct(strategies, catalog, rules.frequencies, min_freq)
    comp = MappingResult()
    if composites:
        mapped = set(direct.assignment)
        pairs = [(names[a], names[b]) for a, b in rules.pairs() if a in mapped and b in mapped]
        comp = generate_composites(pairs, catalog, direct.assignment)
    agg = promote_to_destination(rules.invariant_strategies, direct.specs)
    schema = build_schema(direct.specs, comp.specs, agg.specs, stat_selection)
    logger.info("schema: %d direct, %d composite, %d destination features (dim %d)",
                len(direct.specs), len(comp.specs), len(agg.specs), schema.dimension)
    return SchemaBuild(schema, direct, comp, agg)
