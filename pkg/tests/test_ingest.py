import io
import math

import pytest
from hypothesis import given, settings, strategies as st

from kgnids.ingest import (FormatConfig, IngestError, PacketRecord, ParseError, format_record, parse_record,
                           read_records, stream, write_records)


def test_syn_line():
    rec = parse_record("1.0\t10.0.0.1\t10.0.0.2\tTCP\t60\t0x0002\t65535\t64")
    assert rec.has_flag("SYN") and not rec.has_flag("ACK")
    assert (rec.ts, rec.src, rec.dst, rec.proto, rec.len, rec.tcp_window, rec.ttl) == \
        (1.0, "10.0.0.1", "10.0.0.2", "TCP", 60, 65535, 64)
    assert rec.http_method is None and rec.payload_len is None


def test_missing_ts():
    with pytest.raises(ParseError, match="missing column ts") as exc:
        parse_record("\t10.0.0.1\t10.0.0.2\tTCP\t60", line_no=7)
    assert exc.value.line_no == 7 and exc.value.column == "ts"


def test_empty_http_columns_are_absent():
    line = "2.5\ta\tb\tTCP\t100\t0x0018\t1000\t64\t0\t\t\t\t\t\t46\tbenign"
    rec = parse_record(line)
    assert rec.http_method is None and rec.http_header_len is None and rec.http_status is None
    assert rec.ip_frag is False and rec.payload_len == 46 and rec.label == "benign"


@pytest.mark.parametrize("line,column", [
    ("x\ta\tb\tTCP\t60", "ts"),
    ("1\ta\tb\tTCP\tsixty", "len"),
    ("1\ta\tb\tTCP\t60\t0x02\t-1", "tcp_window"),
    ("1\ta\tb\tTCP\t60\t\t\t300", "ttl"),
    ("1\ta\tb\tTCP\t60\t\t\t\tmaybe", "ip_frag"),
    ("inf\ta\tb\tTCP\t60", "ts"),
])
def test_malformed_values_name_column(line, column):
    with pytest.raises(ParseError) as exc:
        parse_record(line, line_no=3)
    assert exc.value.column == column and "line 3" in str(exc.value)


def test_payload_longer_than_packet():
    with pytest.raises(ParseError, match="payload_len"):
        parse_record("1\ta\tb\tUDP\t60" + "\t" * 10 + "61")


def test_tshark_style_values():
    cfg = FormatConfig(columns=["ts", "src", "dst", "proto", "len", "tcp_flags", "ip_frag"])
    rec = parse_record("1700000000.123456\t1.2.3.4\t5.6.7.8\t6\t1514\t0x0010\tSet", cfg)
    assert rec.proto == "TCP" and rec.has_flag("ACK") and rec.ip_frag is True
    assert parse_record("1\ta\tb\t17\t1", cfg).proto == "UDP"
    assert parse_record("1\ta\tb\t47\t1", cfg).proto == "OTHER"


def test_ip_port_endpoints():
    cfg = FormatConfig(columns=["ts", "src", "src_port", "dst", "dst_port", "proto", "len"], endpoint="ip:port")
    rec = parse_record("1\t10.0.0.1\t4444\t10.0.0.2\t80\tTCP\t60", cfg)
    assert rec.src == "10.0.0.1:4444" and rec.dst == "10.0.0.2:80"
    assert format_record(rec, cfg) == "1.0\t10.0.0.1\t4444\t10.0.0.2\t80\tTCP\t60"
    host = FormatConfig(columns=cfg.columns)
    assert parse_record("1\t10.0.0.1\t4444\t10.0.0.2\t80\tTCP\t60", host).src == "10.0.0.1"


def test_bad_format_config(tmp_path):
    with pytest.raises(ParseError, match="mandatory"):
        FormatConfig(columns=["ts", "src", "dst", "len"])
    with pytest.raises(ParseError, match="unknown"):
        FormatConfig(columns=["ts", "src", "dst", "proto", "len", "colour"])
    p = tmp_path / "fmt.json"
    p.write_text('{"columns": ["ts", "src", "dst", "proto", "len"], "backward_tolerance": 0.5}')
    assert FormatConfig.load(p).backward_tolerance == 0.5
    y = tmp_path / "fmt.yaml"
    y.write_text("columns: [ts, src, dst, proto, len]\ndelimiter: ','\n")
    assert parse_record("1,a,b,UDP,9", FormatConfig.load(y)).len == 9


def test_stream_empty_and_in_order(tmp_path):
    p = tmp_path / "empty.tsv"
    p.write_text("")
    s = stream(p)
    assert list(s) == [] and s.backward_jumps == 0
    p.write_text("# header\n1\ta\tb\tTCP\t60\n2\ta\tb\tTCP\t60\n\n3\ta\tb\tTCP\t60\n")
    s = stream(p)
    assert [r.ts for r in s] == [1.0, 2.0, 3.0] and s.backward_jumps == 0


def test_stream_backward_jump_counted():
    text = "10\ta\tb\tTCP\t60\n5\ta\tb\tTCP\t60\n9.5\ta\tb\tTCP\t60\n"
    s = stream(io.StringIO(text), FormatConfig(backward_tolerance=1.0))
    assert [r.ts for r in s] == [10.0, 5.0, 9.5]
    assert s.backward_jumps == 1


def test_stream_error_has_line_number():
    with pytest.raises(ParseError, match="line 2"):
        list(stream(io.StringIO("1\ta\tb\tTCP\t60\n2\ta\tb\tTCP\tbad\n")))


def test_stream_invalid_utf8_reports_offset(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_bytes(b"1\ta\tb\tTCP\t60\n2\t\xff\tb\tTCP\t60\n")
    with pytest.raises(IngestError, match="byte 15"):
        list(stream(p))


records = st.builds(
    PacketRecord,
    ts=st.floats(0, 2e9, allow_nan=False, allow_infinity=False),
    src=st.from_regex(r"[0-9a-f.:]{1,15}", fullmatch=True),
    dst=st.from_regex(r"[0-9a-f.:]{1,15}", fullmatch=True),
    proto=st.sampled_from(["TCP", "UDP", "ICMP", "OTHER"]),
    len=st.integers(0, 65535),
    tcp_flags=st.none() | st.integers(0, 255),
    tcp_window=st.none() | st.integers(0, 65535),
    ttl=st.none() | st.integers(0, 255),
    ip_frag=st.none() | st.booleans(),
    http_method=st.none() | st.sampled_from(["GET", "POST", "HEAD"]),
    http_header_len=st.none() | st.integers(0, 100000),
    http_header_count=st.none() | st.integers(0, 500),
    http_status=st.none() | st.integers(100, 599),
    ssh_auth_attempt=st.none() | st.booleans(),
    payload_len=st.none(),
    label=st.none() | st.sampled_from(["benign", "mn_flood"]),
)


@settings(max_examples=200, deadline=None)
@given(records)
def test_format_parse_round_trip(rec):
    line = format_record(rec)
    back = parse_record(line)
    assert back == rec
    assert format_record(back) == line


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["1", "a", "TCP", "0x10", "", "-3", "1e400", "nan", "yes", "ü"]), max_size=17))
def test_parsing_is_total(cells):
    line = "\t".join(cells)
    try:
        rec = parse_record(line)
    except ParseError as exc:
        assert exc.column is not None
    else:
        assert math.isfinite(rec.ts) and rec.src and rec.dst


def test_write_read_records(tmp_path):
    recs = [PacketRecord(float(i), "a", "b", "UDP", 10 + i, payload_len=i, label="benign") for i in range(5)]
    write_records(recs, tmp_path / "r.tsv")
    assert read_records(tmp_path / "r.tsv") == recs
