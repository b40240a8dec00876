"""Packet records from TAB-separated field exports.

The canonical input is what ``tshark -T fields -E separator=/t`` prints for a
fixed column list (see README).  Every line either becomes a
:class:`PacketRecord` or raises :class:`ParseError` naming the line and column.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

logger = logging.getLogger(__name__)

TCP_FLAG_BITS = {"FIN": 0x01, "SYN": 0x02, "RST": 0x04, "PSH": 0x08,
                 "ACK": 0x10, "URG": 0x20, "ECE": 0x40, "CWR": 0x80}
PROTOCOLS = ("TCP", "UDP", "ICMP", "OTHER")
_PROTO_NUMBERS = {"6": "TCP", "17": "UDP", "1": "ICMP"}


@dataclass(slots=True)
class PacketRecord:
    ts: float
    src: str
    dst: str
    proto: str
    len: int
    tcp_flags: int | None = None
    tcp_window: int | None = None
    ttl: int | None = None
    ip_frag: bool | None = None
    http_method: str | None = None
    http_header_len: int | None = None
    http_header_count: int | None = None
    http_status: int | None = None
    ssh_auth_attempt: bool | None = None
    payload_len: int | None = None
    label: str | None = None

    def has_flag(self, name: str) -> bool:
        return self.tcp_flags is not None and bool(self.tcp_flags & TCP_FLAG_BITS[name])


RECORD_FIELDS = tuple(f.name for f in fields(PacketRecord))
MANDATORY = ("ts", "src", "dst", "proto", "len")
_INT_FIELDS = {"len", "tcp_flags", "tcp_window", "ttl", "http_header_len", "http_header_count",
               "http_status", "payload_len"}
_BOOL_FIELDS = {"ip_frag", "ssh_auth_attempt"}
_TRUE = {"1", "true", "yes", "set", "t", "y"}
_FALSE = {"0", "false", "no", "not set", "f", "n"}


class ParseError(ValueError):
    def __init__(self, message: str, line_no: int | None = None, column: str | None = None):
        self.line_no = line_no
        self.column = column
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(where + message)


class IngestError(OSError):
    pass


@dataclass
class FormatConfig:
    columns: list = field(default_factory=lambda: [c for c in RECORD_FIELDS])
    delimiter: str = "\t"
    endpoint: str = "ip"            # or "ip:port"
    backward_tolerance: float = 1.0

    def __post_init__(self):
        missing = [c for c in MANDATORY if c not in self.columns]
        if missing:
            raise ParseError(f"column map lacks mandatory column(s) {', '.join(missing)}")
        if len(set(self.columns)) != len(self.columns):
            raise ParseError("duplicate names in column map")
        known = set(RECORD_FIELDS) | {"src_port", "dst_port", ""}
        unknown = [c for c in self.columns if c not in known]
        if unknown:
            raise ParseError(f"unknown column(s) {', '.join(unknown)}")
        if self.endpoint not in ("ip", "ip:port"):
            raise ParseError(f"endpoint must be 'ip' or 'ip:port', not {self.endpoint!r}")

    @classmethod
    def load(cls, path) -> "FormatConfig":
        text = Path(path).read_text(encoding="utf-8")
        if str(path).endswith((".yaml", ".yml")):
            import yaml
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
        return cls(**data)


def _parse_value(name: str, raw: str, line_no):
    try:
        if name == "ts":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
        if name in _INT_FIELDS:
            v = int(raw.split(",")[0], 0) if raw.lower().startswith("0x") else int(float(raw.split(",")[0]))
            if v < 0:
                raise ValueError("negative")
            if name == "ttl" and v > 255:
                raise ValueError("ttl above 255")
            return v
        if name in _BOOL_FIELDS:
            low = raw.strip().lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError("not a boolean")
        if name == "proto":
            token = raw.split(",")[0].strip()
            up = token.upper()
            if up in PROTOCOLS:
                return up
            return _PROTO_NUMBERS.get(token, "OTHER")
        return raw
    except (ValueError, OverflowError) as exc:
        raise ParseError(f"bad value {raw!r} for column {name} ({exc})", line_no, name) from None


def parse_record(line: str, config: FormatConfig | None = None, line_no: int | None = None) -> PacketRecord:
    cfg = config or FormatConfig()
    parts = line.rstrip("\r\n").split(cfg.delimiter)
    values = {}
    for i, name in enumerate(cfg.columns):
        raw = parts[i].strip() if i < len(parts) else ""
        if name and raw != "":
            values[name] = _parse_value(name, raw, line_no) if name not in ("src_port", "dst_port") else raw
    for name in MANDATORY:
        if name not in values:
            raise ParseError(f"missing column {name}", line_no, name)
    if cfg.endpoint == "ip:port":
        for side in ("src", "dst"):
            port = values.pop(f"{side}_port", None)
            if port:
                values[side] = f"{values[side]}:{port}"
    else:
        values.pop("src_port", None)
        values.pop("dst_port", None)
    rec = PacketRecord(**values)
    if rec.payload_len is not None and rec.payload_len > rec.len:
        raise ParseError(f"payload_len {rec.payload_len} exceeds len {rec.len}", line_no, "payload_len")
    return rec


def _fmt(name, value):
    if value is None:
        return ""
    if name == "ts":
        return repr(float(value))
    if name == "tcp_flags":
        return f"0x{value:04x}"
    if isinstance(value, bool):
        return "1" if value else "0"
    return str(value)


def format_record(rec: PacketRecord, config: FormatConfig | None = None) -> str:
    cfg = config or FormatConfig()
    out = []
    for name in cfg.columns:
        if name in ("src_port", "dst_port"):
            side = getattr(rec, name[:3])
            out.append(side.rsplit(":", 1)[1] if cfg.endpoint == "ip:port" and ":" in side else "")
        elif name in ("src", "dst") and cfg.endpoint == "ip:port":
            out.append(getattr(rec, name).rsplit(":", 1)[0])
        else:
            out.append(_fmt(name, getattr(rec, name)) if name else "")
    return cfg.delimiter.join(out)


class RecordStream:
    """Iterate records in file order, counting backward timestamp jumps."""

    def __init__(self, source, config: FormatConfig | None = None):
        self.source = source
        self.config = config or FormatConfig()
        self.backward_jumps = 0
        self.records = 0

    def _open(self):
        if isinstance(self.source, (str, Path)):
            return open(self.source, "rb"), True
        if isinstance(self.source, io.TextIOBase):
            return self.source, False
        return self.source, False

    def __iter__(self):
        fh, owned = self._open()
        offset = 0
        last_ts = -math.inf
        try:
            line_no = 0
            while True:
                try:
                    raw = fh.readline()
                except OSError as exc:
                    raise IngestError(f"read failed at byte {offset}: {exc}") from exc
                if not raw:
                    break
                line_no += 1
                if isinstance(raw, bytes):
                    size = len(raw)
                    try:
                        line = raw.decode("utf-8")
                    except UnicodeDecodeError as exc:
                        raise IngestError(f"invalid UTF-8 at byte {offset + exc.start}") from exc
                else:
                    line = raw
                    size = len(raw.encode("utf-8"))
                offset += size
                if not line.strip() or line.startswith("#"):
                    continue
                rec = parse_record(line, self.config, line_no)
                if rec.ts < last_ts - self.config.backward_tolerance:
                    self.backward_jumps += 1
                    logger.debug("line %d: timestamp %.6f jumps back from %.6f", line_no, rec.ts, last_ts)
                last_ts = max(last_ts, rec.ts)
                self.records += 1
                yield rec
        finally:
            if owned:
                fh.close()


def stream(source, config: FormatConfig | None = None) -> RecordStream:
    return RecordStream(source, config)


def write_records(records, path, config: FormatConfig | None = None, header: bool = True) -> None:
    cfg = config or FormatConfig()
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write("# " + cfg.delimiter.join(cfg.columns) + "\n")
        for rec in records:
            fh.write(format_record(rec, cfg) + "\n")


def read_records(path, config: FormatConfig | None = None) -> list[PacketRecord]:
    return list(stream(path, config))
