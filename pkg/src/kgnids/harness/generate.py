"""Synthetic benign and attack traffic as packet records.

Benign traffic is a stream of short client/server sessions with Poisson
arrivals.  Attack scenarios reuse the same session shape so that, packet by
packet and channel by channel, they look benign except along the one axis
each attack exploits.
"""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..ingest import PacketRecord

BENIGN_LABEL = "benign"
WINDOW_SIZES = (8192, 14600, 29200, 64240, 65535)


class ScenarioKind(str, enum.Enum):
    BENIGN_POISSON = "benign_poisson"
    MN_FLOOD = "mn_flood"
    ZERO_WINDOW = "zero_window"
    LOW_RATE_BURST = "low_rate_burst"
    HTTP_OVERFLOW = "http_overflow"
    HTTP_MAL_HEADER = "http_mal_header"


@dataclass
class TrafficProfile:
    """Shape of benign sessions; attack scenarios borrow it."""

    n_clients: int = 400
    n_servers: int = 200
    session_rate: float = 20.0         # new sessions per second
    packets_min: int = 4
    packets_max: int = 20
    packet_iat: float = 0.05           # mean seconds between packets of one session
    tcp_share: float = 0.7
    udp_share: float = 0.2             # rest is ICMP
    http_share: float = 0.3            # of TCP sessions
    ssh_share: float = 0.1             # of TCP sessions

    @property
    def packets_mean(self) -> float:
        return (self.packets_min + self.packets_max) / 2

    @property
    def channel_rate(self) -> float:
        return 1.0 / self.packet_iat


@dataclass
class ScenarioSpec:
    kind: ScenarioKind
    duration: float
    rng_seed: int = 0
    start: float = 0.0
    profile: TrafficProfile = field(default_factory=TrafficProfile)
    # attack knobs
    sources: int = 50                  # M for MN_FLOOD (per wave)
    victim: str | None = None          # default: first benign server
    wave_interval: float = 5.0         # MN_FLOOD: seconds between waves
    wave_spread: float = 0.25          # MN_FLOOD: seconds over which a wave's sessions start
    channel_rate_factor: float = 0.8   # MN_FLOOD per-channel rate relative to benign
    rate_multiplier: float = 2.2       # ZERO_WINDOW / HTTP_*: session rate relative to benign
    burst: float = 1.0
    idle: float = 1.0
    burst_rate: float = 200.0          # LOW_RATE_BURST packets per second inside a burst
    header_len: tuple = (8000, 16000)  # HTTP_OVERFLOW
    header_count: tuple = (100, 300)   # HTTP_MAL_HEADER

    def __post_init__(self):
        self.kind = ScenarioKind(self.kind)
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if self.kind is ScenarioKind.MN_FLOOD and self.sources < 2:
            raise ValueError("MN_FLOOD needs at least 2 sources")
        if self.burst <= 0 or self.idle < 0:
            raise ValueError("burst must be > 0 and idle >= 0")
        if self.rate_multiplier <= 0 or self.burst_rate <= 0 or self.channel_rate_factor <= 0:
            raise ValueError("rates must be positive")
        p = self.profile
        if not (1 <= p.packets_min <= p.packets_max) or p.packet_iat <= 0 or p.session_rate <= 0:
            raise ValueError("bad traffic profile")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        prof = TrafficProfile(**d.pop("profile", {}))
        for k in ("header_len", "header_count"):
            if k in d:
                d[k] = tuple(d[k])
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario parameter(s) {sorted(unknown)}")
        return cls(profile=prof, **d)


def client_ip(i: int) -> str:
    return str(ipaddress.IPv4Address("10.0.0.0") + 1 + i)


def server_ip(i: int) -> str:
    return str(ipaddress.IPv4Address("192.168.0.0") + 1 + i)


def attacker_ip(i: int) -> str:
    return str(ipaddress.IPv4Address("172.16.0.0") + 1 + i)


class _Sessions:
    """Builds packet lists for one session at a time."""

    def __init__(self, rng: np.random.Generator, profile: TrafficProfile, label: str):
        self.rng = rng
        self.p = profile
        self.label = label

    def n_packets(self) -> int:
        return int(self.rng.integers(self.p.packets_min, self.p.packets_max + 1))

    def times(self, t0, n, iat):
        gaps = self.rng.exponential(iat, n - 1)
        return t0 + np.concatenate(([0.0], np.cumsum(gaps)))

    def tcp(self, t0, src, dst, ttl, *, iat=None, window=None, http=None, ssh=False, n=None):
        rng = self.rng
        n = n or self.n_packets()
        ts = self.times(t0, n, iat or self.p.packet_iat)
        base_win = int(rng.choice(WINDOW_SIZES)) if window is None else window
        out = []
        for k, t in enumerate(ts):
            if k == 0:
                flags, length = 0x02, 60
            elif k == n - 1 and n > 2:
                flags, length = 0x11, 54
            else:
                length = int(rng.integers(60, 1500))
                flags = 0x18 if length > 60 else 0x10
            win = base_win if window is not None else max(1, int(base_win * rng.uniform(0.8, 1.0)))
            rec = PacketRecord(float(t), src, dst, "TCP", length, tcp_flags=flags, tcp_window=win, ttl=ttl,
                               ip_frag=False, payload_len=max(0, length - 54), label=self.label)
            if http is not None and k == 1:
                method, hlen, hcount = http
                rec.http_method = method
                rec.http_header_len = hlen
                rec.http_header_count = hcount
                rec.len = max(rec.len, min(hlen + 54, 65535))
                rec.payload_len = rec.len - 54
            if ssh and 0 < k < n - 1:
                rec.ssh_auth_attempt = bool(rng.random() < 0.3)
            out.append(rec)
        return out

    def udp(self, t0, src, dst, ttl):
        n = self.n_packets()
        return [PacketRecord(float(t), src, dst, "UDP", int(length), ttl=ttl, ip_frag=False,
                             payload_len=int(length) - 42, label=self.label)
                for t, length in zip(self.times(t0, n, self.p.packet_iat), self.rng.integers(80, 600, n))]

    def icmp(self, t0, src, dst, ttl):
        n = self.n_packets()
        return [PacketRecord(float(t), src, dst, "ICMP", 98, ttl=ttl, ip_frag=False, payload_len=56,
                             label=self.label) for t in self.times(t0, n, self.p.packet_iat)]

    def benign_http(self):
        rng = self.rng
        return (str(rng.choice(["GET", "GET", "GET", "POST"])), int(rng.integers(200, 900)), int(rng.integers(5, 16)))


def _arrivals(rng, rate, start, duration):
    n = rng.poisson(rate * duration)
    return np.sort(start + rng.uniform(0.0, duration, n))


def _benign(spec: ScenarioSpec, rng) -> list:
    p = spec.profile
    s = _Sessions(rng, p, BENIGN_LABEL)
    ttls = rng.choice([64, 128], p.n_clients)
    out = []
    for t0 in _arrivals(rng, p.session_rate, spec.start, spec.duration):
        c = int(rng.integers(p.n_clients))
        src, dst, ttl = client_ip(c), server_ip(int(rng.integers(p.n_servers))), int(ttls[c])
        u = rng.random()
        if u < p.tcp_share:
            v = rng.random()
            if v < p.http_share:
                out += s.tcp(t0, src, dst, ttl, http=s.benign_http())
            elif v < p.http_share + p.ssh_share:
                out += s.tcp(t0, src, dst, ttl, ssh=True)
            else:
                out += s.tcp(t0, src, dst, ttl)
        elif u < p.tcp_share + p.udp_share:
            out += s.udp(t0, src, dst, ttl)
        else:
            out += s.icmp(t0, src, dst, ttl)
    return out


def _mn_flood(spec: ScenarioSpec, rng) -> list:
    p = spec.profile
    s = _Sessions(rng, p, spec.kind.value)
    victim = spec.victim or server_ip(0)
    out = []
    nxt = 0
    t = spec.start
    while t < spec.start + spec.duration:
        for t0 in np.sort(t + rng.uniform(0.0, spec.wave_spread, spec.sources)):
            # fresh source per session keeps each channel as short as a benign one
            out += s.tcp(float(t0), attacker_ip(nxt), victim, 64, iat=p.packet_iat / spec.channel_rate_factor)
            nxt += 1
        t += spec.wave_interval
    return out


def _zero_window(spec: ScenarioSpec, rng) -> list:
    p = spec.profile
    s = _Sessions(rng, p, spec.kind.value)
    out = []
    for i, t0 in enumerate(_arrivals(rng, p.session_rate * spec.rate_multiplier, spec.start, spec.duration)):
        out += s.tcp(t0, attacker_ip(i), server_ip(int(rng.integers(p.n_servers))), 64, window=0)
    return out


def _low_rate(spec: ScenarioSpec, rng) -> list:
    victim = spec.victim or server_ip(0)
    out = []
    t = spec.start
    end = spec.start + spec.duration
    while t < end:
        b_end = min(t + spec.burst, end)
        for ts in _arrivals(rng, spec.burst_rate, t, b_end - t):
            out.append(PacketRecord(float(ts), attacker_ip(int(rng.integers(1 << 16))), victim, "TCP", 60,
                                    tcp_flags=0x02, tcp_window=int(rng.choice(WINDOW_SIZES)), ttl=64,
                                    ip_frag=False, payload_len=0, label=spec.kind.value))
        t += spec.burst + spec.idle
    return out


def _http_attack(spec: ScenarioSpec, rng) -> list:
    p = spec.profile
    s = _Sessions(rng, p, spec.kind.value)
    rate = p.session_rate * p.tcp_share * p.http_share * spec.rate_multiplier
    out = []
    for i, t0 in enumerate(_arrivals(rng, rate, spec.start, spec.duration)):
        if spec.kind is ScenarioKind.HTTP_OVERFLOW:
            http = ("GET", int(rng.integers(*spec.header_len)), int(rng.integers(5, 16)))
        else:
            http = ("GET", int(rng.integers(400, 2000)), int(rng.integers(*spec.header_count)))
        out += s.tcp(t0, attacker_ip(i), server_ip(int(rng.integers(p.n_servers))), 64, http=http)
    return out


_GENERATORS = {
    ScenarioKind.BENIGN_POISSON: _benign,
    ScenarioKind.MN_FLOOD: _mn_flood,
    ScenarioKind.ZERO_WINDOW: _zero_window,
    ScenarioKind.LOW_RATE_BURST: _low_rate,
    ScenarioKind.HTTP_OVERFLOW: _http_attack,
    ScenarioKind.HTTP_MAL_HEADER: _http_attack,
}


def generate(spec: ScenarioSpec) -> list[PacketRecord]:
    """Records for one scenario, sorted by timestamp; deterministic in ``spec.rng_seed``."""
    recs = _GENERATORS[spec.kind](spec, np.random.default_rng(spec.rng_seed))
    recs.sort(key=lambda r: r.ts)
    return recs


def merge(*traces) -> list[PacketRecord]:
    """Interleave several record lists by timestamp (stable)."""
    out = [r for t in traces for r in t]
    out.sort(key=lambda r: r.ts)
    return out


def key_rates(records, key) -> dict:
    """Packets per second for each key, over the span between its first and last packet."""
    first, last, count = {}, {}, {}
    for r in records:
        k = key(r)
        first.setdefault(k, r.ts)
        last[k] = r.ts
        count[k] = count.get(k, 0) + 1
    return {k: (count[k] - 1) / (last[k] - first[k]) for k in count if count[k] > 1 and last[k] > first[k]}


def with_scenario(spec: ScenarioSpec, **changes) -> ScenarioSpec:
    return replace(spec, **changes)
