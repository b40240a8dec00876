"""Small expression language over packet-record fields.

Grammar (a strict subset of Python expression syntax)::

    expr     := or_expr
    or_expr  := and_expr ("or" and_expr)*
    and_expr := not_expr ("and" not_expr)*
    not_expr := "not" not_expr | compare
    compare  := arith (("==" | "!=" | "<" | "<=" | ">" | ">=") arith)*
    arith    := term (("+" | "-") term)*
    term     := unary (("*" | "/") unary)*
    unary    := "-" unary | atom
    atom     := FIELD | INT | REAL | STRING | "True" | "False" | "(" expr ")"

Expressions are checked against the field table below before use.  A field
that is absent on a packet makes the whole expression undefined; callers treat
that as "predicate false / no update".
"""

from __future__ import annotations

import ast
import math

from ..ingest import TCP_FLAG_BITS, PacketRecord

# field name -> static kind
FIELD_KINDS = {
    "ts": "num", "src": "str", "dst": "str", "proto": "str", "len": "num",
    "tcp_flags": "num", "tcp_window": "num", "ttl": "num", "ip_frag": "bool",
    "http_method": "str", "http_header_len": "num", "http_header_count": "num",
    "http_status": "num", "ssh_auth_attempt": "bool", "payload_len": "num",
    # derived from proto / tcp_flags
    "is_tcp": "bool", "is_udp": "bool", "is_icmp": "bool", "is_http": "bool", "is_ssh": "bool",
    **{flag.lower(): "bool" for flag in TCP_FLAG_BITS},
    # seconds since the previous packet on the same channel (absent on the first)
    "iat": "num",
}

_RAW = ("ts", "src", "dst", "proto", "len", "tcp_flags", "tcp_window", "ttl", "ip_frag",
        "http_method", "http_header_len", "http_header_count", "http_status",
        "ssh_auth_attempt", "payload_len")
_FLAGS = tuple((name.lower(), bit) for name, bit in TCP_FLAG_BITS.items())


class ExpressionError(ValueError):
    pass


def record_env(rec: PacketRecord, iat: float | None = None) -> dict:
    env = {}
    for name in _RAW:
        v = getattr(rec, name)
        if v is not None:
            env[name] = v
    proto = rec.proto
    env["is_tcp"] = proto == "TCP"
    env["is_udp"] = proto == "UDP"
    env["is_icmp"] = proto == "ICMP"
    env["is_http"] = rec.http_method is not None or rec.http_status is not None
    env["is_ssh"] = rec.ssh_auth_attempt is not None
    flags = rec.tcp_flags
    if flags is not None:
        for name, bit in _FLAGS:
            env[name] = bool(flags & bit)
    if iat is not None:
        env["iat"] = iat
    return env


_CMP = (ast.Eq, ast.NotEq, ast.Lt, ast.LtE, ast.Gt, ast.GtE)
_ARITH = (ast.Add, ast.Sub, ast.Mult, ast.Div)


def _kind(node, text) -> str:
    if isinstance(node, ast.Expression):
        return _kind(node.body, text)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool):
            return "bool"
        if isinstance(node.value, (int, float)):
            return "num"
        if isinstance(node.value, str):
            return "str"
    elif isinstance(node, ast.Name):
        if node.id not in FIELD_KINDS:
            raise ExpressionError(f"unknown field {node.id!r} in {text!r}")
        return FIELD_KINDS[node.id]
    elif isinstance(node, ast.BoolOp):
        for v in node.values:
            if _kind(v, text) != "bool":
                raise ExpressionError(f"'and'/'or' need boolean operands in {text!r}")
        return "bool"
    elif isinstance(node, ast.UnaryOp):
        inner = _kind(node.operand, text)
        if isinstance(node.op, ast.Not) and inner == "bool":
            return "bool"
        if isinstance(node.op, (ast.USub, ast.UAdd)) and inner in ("num", "bool"):
            return "num"
    elif isinstance(node, ast.Compare):
        kinds = [_kind(node.left, text)] + [_kind(c, text) for c in node.comparators]
        for op, a, b in zip(node.ops, kinds, kinds[1:]):
            if not isinstance(op, _CMP):
                break
            if isinstance(op, (ast.Eq, ast.NotEq)):
                if (a == "str") != (b == "str"):
                    raise ExpressionError(f"cannot compare {a} with {b} in {text!r}")
            elif a == "str" or b == "str":
                raise ExpressionError(f"ordering comparison on text in {text!r}")
        else:
            return "bool"
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _ARITH):
        if _kind(node.left, text) == "str" or _kind(node.right, text) == "str":
            raise ExpressionError(f"arithmetic on text in {text!r}")
        return "num"
    raise ExpressionError(f"unsupported syntax {type(node).__name__} in {text!r}")


class Expression:
    """A checked, compiled expression."""

    __slots__ = ("text", "kind", "names", "_code")

    def __init__(self, text: str):
        text = str(text).strip()
        if not text:
            raise ExpressionError("empty expression")
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"syntax error in {text!r}: {exc.msg}") from None
        self.text = text
        self.kind = _kind(tree, text)
        self.names = frozenset(n.id for n in ast.walk(tree) if isinstance(n, ast.Name))
        self._code = compile(tree, "<feature>", "eval")

    @property
    def is_boolean(self) -> bool:
        return self.kind == "bool"

    def evaluate(self, env: dict):
        """Numeric value (booleans as 0/1), or None when undefined on this packet."""
        try:
            v = eval(self._code, {"__builtins__": {}}, env)
        except (NameError, ZeroDivisionError, TypeError, OverflowError):
            return None
        if isinstance(v, str):
            return None
        v = float(v)
        return v if math.isfinite(v) else None

    def test(self, env: dict) -> bool:
        v = self.evaluate(env)
        return bool(v)

    def __repr__(self):
        return f"Expression({self.text!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and other.text == self.text

    def __hash__(self):
        return hash(self.text)


def conjoin(a: Expression, b: Expression) -> Expression:
    return Expression(f"({a.text}) and ({b.text})")
