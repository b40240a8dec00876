"""Streaming per-channel / per-destination feature statistics.

Each feature keeps five running statistics per key (weight, cumulative sum,
mean, sum of squared residuals, standard deviation).  A packet first updates
the channel ``(src, dst)`` statistics; every destination feature then absorbs
the absolute change in cumulative sum of its base channel feature, so many
small channels aimed at one host add up at the destination.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..ingest import PacketRecord
from .expr import _FLAGS, Expression
from .mapping import FeatureSchema, Stat

logger = logging.getLogger(__name__)


class StatBundle:
    """W, CS, mean, SSR, std updated one value at a time."""

    __slots__ = ("W", "CS", "mean", "SSR", "std")

    def __init__(self, W=0, CS=0.0, mean=0.0, SSR=0.0, std=0.0):
        self.W = W
        self.CS = CS
        self.mean = mean
        self.SSR = SSR
        self.std = std

    def update(self, x: float) -> None:
        self.CS += x
        self.W += 1
        self.mean = self.CS / self.W
        r = x - self.mean
        self.SSR += r * r
        self.std = math.sqrt(self.SSR / self.W)

    def value(self, stat: Stat) -> float:
        return float(getattr(self, "std" if stat is Stat.STD else "mean" if stat is Stat.MEAN else stat.value))

    def as_tuple(self):
        return (self.W, self.CS, self.mean, self.SSR, self.std)

    def copy(self) -> "StatBundle":
        return StatBundle(*self.as_tuple())

    def __eq__(self, other):
        return isinstance(other, StatBundle) and self.as_tuple() == other.as_tuple()

    def __repr__(self):
        return "StatBundle(W=%d, CS=%r, mean=%r, SSR=%r, std=%r)" % self.as_tuple()


def stat_update(b: StatBundle, x: float) -> StatBundle:
    """Return a new bundle with ``x`` absorbed."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite update value {x!r}")
    out = b.copy()
    out.update(x)
    return out


_STAT_SLOT = {Stat.W: 0, Stat.CS: 1, Stat.MEAN: 2, Stat.SSR: 3, Stat.STD: 4}
_DERIVED = {"is_tcp", "is_udp", "is_icmp", "is_http", "is_ssh", "iat"} | {n for n, _ in _FLAGS}


def _env_builder(names: set):
    """Build only the environment entries the schema's expressions read."""
    raw = sorted(n for n in names if n not in _DERIVED)
    flags = [(n, b) for n, b in _FLAGS if n in names]
    want = names & {"is_tcp", "is_udp", "is_icmp", "is_http", "is_ssh"}

    def build(rec: PacketRecord, iat):
        env = {}
        for n in raw:
            v = getattr(rec, n)
            if v is not None:
                env[n] = v
        if want:
            if "is_tcp" in want:
                env["is_tcp"] = rec.proto == "TCP"
            if "is_udp" in want:
                env["is_udp"] = rec.proto == "UDP"
            if "is_icmp" in want:
                env["is_icmp"] = rec.proto == "ICMP"
            if "is_http" in want:
                env["is_http"] = rec.http_method is not None or rec.http_status is not None
            if "is_ssh" in want:
                env["is_ssh"] = rec.ssh_auth_attempt is not None
        if flags and rec.tcp_flags is not None:
            f = rec.tcp_flags
            for n, bit in flags:
                env[n] = bool(f & bit)
        if iat is not None:
            env["iat"] = iat
        return env

    return build


@dataclass
class EvictionPolicy:
    idle_timeout: float | None = None   # seconds; None disables eviction
    check_interval: float | None = None  # stream seconds between sweeps (default idle_timeout)

    def __post_init__(self):
        if self.idle_timeout is not None and not self.idle_timeout > 0:
            raise ValueError("idle_timeout must be > 0")


class ExtractorState:
    """Per-key statistics for one schema.  Single writer; apply packets in order."""

    def __init__(self, schema: FeatureSchema, eviction: EvictionPolicy | None = None):
        self.schema = schema
        self.eviction = eviction or EvictionPolicy()
        self.channel_stats: dict[tuple, list] = {}
        self.dest_stats: dict[str, list] = {}
        self.last_seen: dict[tuple, float] = {}
        self.dest_channels: dict[str, set] = {}
        self.ops = 0          # bundle updates performed, for cost accounting
        self.packets = 0
        ch = schema.channel_specs
        self._channel_names = [s.name for s in ch]
        index = {s.name: i for i, s in enumerate(ch)}
        self._channel = [(Expression(s.value_expr), Expression(s.predicate) if s.predicate else None) for s in ch]
        self._dest = []
        for s in schema.destination_specs:
            if s.base is not None:
                self._dest.append((index[s.base], None, None))
            else:
                self._dest.append((None, Expression(s.value_expr), Expression(s.predicate) if s.predicate else None))
        names = set()
        for v, p in self._channel:
            names |= v.names | (p.names if p else set())
        for _, v, p in self._dest:
            if v is not None:
                names |= v.names | (p.names if p else set())
        self._env = _env_builder(names)
        self._slots = [_STAT_SLOT[s] for s in schema.stat_selection]

    def channel_bundles(self, src, dst) -> dict:
        b = self.channel_stats.get((src, dst))
        return dict(zip(self._channel_names, b)) if b else {}

    def dest_bundles(self, dst) -> dict:
        b = self.dest_stats.get(dst)
        return dict(zip((s.name for s in self.schema.destination_specs), b)) if b else {}

    def _emit(self, bundles, out):
        slots = self._slots
        for b in bundles:
            t = (b.W, b.CS, b.mean, b.SSR, b.std)
            for k in slots:
                out.append(float(t[k]))


def extract(state: ExtractorState, p: PacketRecord) -> list:
    """Absorb one packet and return its feature vector (channel block then destination block)."""
    key = (p.src, p.dst)
    bundles = state.channel_stats.get(key)
    if bundles is None:
        bundles = state.channel_stats[key] = [StatBundle() for _ in state._channel]
        state.dest_channels.setdefault(p.dst, set()).add(key)
    prev = state.last_seen.get(key)
    env = state._env(p, None if prev is None else p.ts - prev)
    state.last_seen[key] = p.ts if prev is None else max(prev, p.ts)
    deltas = [0.0] * len(bundles)
    ops = 0
    for i, (value, pred) in enumerate(state._channel):
        if pred is not None and not pred.test(env):
            continue
        x = value.evaluate(env)
        if x is None:
            continue
        b = bundles[i]
        before = b.CS
        b.update(x)
        deltas[i] = abs(b.CS - before)
        ops += 1
    dest = state.dest_stats.get(p.dst)
    if dest is None:
        dest = state.dest_stats[p.dst] = [StatBundle() for _ in state._dest]
    for j, (base, value, pred) in enumerate(state._dest):
        if base is not None:
            dest[j].update(deltas[base])
        else:
            if pred is not None and not pred.test(env):
                continue
            x = value.evaluate(env)
            if x is None:
                continue
            dest[j].update(x)
        ops += 1
    state.ops += ops
    state.packets += 1
    out = []
    state._emit(bundles, out)
    state._emit(dest, out)
    return out


def evict_idle(state: ExtractorState, now: float, idle_timeout: float) -> int:
    """Drop channels idle for at least ``idle_timeout``; drop destinations left without channels."""
    if not idle_timeout > 0:
        raise ValueError("idle_timeout must be > 0")
    stale = [k for k, t in state.last_seen.items() if now - t >= idle_timeout]
    for key in stale:
        del state.last_seen[key]
        state.channel_stats.pop(key, None)
        chans = state.dest_channels.get(key[1])
        if chans is not None:
            chans.discard(key)
            if not chans:
                del state.dest_channels[key[1]]
                state.dest_stats.pop(key[1], None)
    return len(stale)


@dataclass
class ExtractionOutput:
    columns: list
    X: np.ndarray
    ts: np.ndarray
    labels: list
    index: np.ndarray                 # packet position in the input stream
    evicted: int = 0
    stats: dict = field(default_factory=dict)


def extract_stream(records, schema: FeatureSchema, eviction: EvictionPolicy | None = None,
                   emit_every: int = 1, state: ExtractorState | None = None) -> ExtractionOutput:
    """Run a record stream through a fresh (or given) extractor, keeping every ``emit_every``-th vector."""
    if emit_every < 1:
        raise ValueError("emit_every must be >= 1")
    state = state or ExtractorState(schema, eviction)
    pol = state.eviction
    timeout = pol.idle_timeout
    interval = pol.check_interval or timeout
    next_sweep = None
    rows, ts, labels, idx = [], [], [], []
    evicted = 0
    for i, rec in enumerate(records):
        if timeout is not None:
            if next_sweep is None:
                next_sweep = rec.ts + interval
            elif rec.ts >= next_sweep:
                evicted += evict_idle(state, rec.ts, timeout)
                next_sweep = rec.ts + interval
        v = extract(state, rec)
        if i % emit_every == 0:
            rows.append(v)
            ts.append(rec.ts)
            labels.append(rec.label)
            idx.append(i)
    X = np.array(rows, dtype=float).reshape(len(rows), schema.dimension)
    logger.info("extracted %d vectors from %d packets (%d channels evicted)", len(rows), state.packets, evicted)
    return ExtractionOutput(schema.column_names, X, np.array(ts, dtype=float), labels,
                            np.array(idx, dtype=np.int64), evicted,
                            {"channels": len(state.channel_stats), "destinations": len(state.dest_stats),
                             "ops": state.ops})


BENIGN = "benign"


def write_vectors_csv(out: ExtractionOutput, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["ts", "label"] + list(out.columns))
        for t, lab, row in zip(out.ts, out.labels, out.X):
            w.writerow([repr(float(t)), lab or BENIGN] + [repr(float(v)) for v in row])


def write_vectors_f32(out: ExtractionOutput, path) -> None:
    """Raw little-endian float32 rows; timestamps and labels are not included."""
    out.X.astype("<f4").tofile(path)


def read_vectors_csv(path):
    """Return (columns, X, ts, labels)."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[:2] != ["ts", "label"]:
            raise ValueError(f"{path}: expected ts,label leading columns")
        ts, labels, rows = [], [], []
        for row in r:
            ts.append(float(row[0]))
            labels.append(row[1])
            rows.append([float(v) for v in row[2:]])
    X = np.array(rows, dtype=float).reshape(len(rows), len(header) - 2)
    return header[2:], X, np.array(ts), labels
