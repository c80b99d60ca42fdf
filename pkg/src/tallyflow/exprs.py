"""Row predicates and row expressions.

Predicates are three-valued: a comparison against a Missing cell is neither
true nor false, it is unknown with a reason, and partitioning collapses
unknown to the reject side carrying that reason.  Expressions only ever add
information to a row; division is deliberately absent (averages divide at
presentation time, not in the data).

Both ASTs round-trip through plain dicts so pipeline documents and fuzz
counterexamples can be serialized.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal

from .errors import FnNotTotal, UnknownField
from .monoid import Kind, MonoidElement
from .values import FieldValue, Missing, Quantity, cell_key, dec4

# -- predicate AST ------------------------------------------------------


@dataclass(frozen=True)
class Always:
    value: bool


@dataclass(frozen=True)
class FieldDefined:
    field: str


@dataclass(frozen=True)
class Compare:
    op: str  # eq ne lt le gt ge
    field: str
    value: FieldValue


@dataclass(frozen=True)
class InSet:
    field: str
    values: tuple


@dataclass(frozen=True)
class Not:
    inner: "Pred"


@dataclass(frozen=True)
class All:
    parts: tuple


@dataclass(frozen=True)
class AnyOf:
    parts: tuple


Pred = Always | FieldDefined | Compare | InSet | Not | All | AnyOf

_OPS = {
    "eq": lambda c: c == 0,
    "ne": lambda c: c != 0,
    "lt": lambda c: c < 0,
    "le": lambda c: c <= 0,
    "gt": lambda c: c > 0,
    "ge": lambda c: c >= 0,
}


class Truth:
    """One of: true, false(reason), unknown(reason)."""

    __slots__ = ("state", "reason")

    def __init__(self, state: str, reason: str | None = None):
        self.state = state  # "t" | "f" | "u"
        self.reason = reason

    @classmethod
    def true(cls) -> "Truth":
        return cls("t")

    @classmethod
    def false(cls, reason: str) -> "Truth":
        return cls("f", reason)

    @classmethod
    def unknown(cls, reason: str) -> "Truth":
        return cls("u", reason)


def describe(p: Pred) -> str:
    if isinstance(p, Always):
        return "always true" if p.value else "always false"
    if isinstance(p, FieldDefined):
        return f"{p.field} is defined"
    if isinstance(p, Compare):
        return f"{p.field} {p.op} {p.value}"
    if isinstance(p, InSet):
        return f"{p.field} in {{{', '.join(str(v) for v in p.values)}}}"
    if isinstance(p, Not):
        return f"not ({describe(p.inner)})"
    if isinstance(p, All):
        return " and ".join(f"({describe(q)})" for q in p.parts) or "always true"
    if isinstance(p, AnyOf):
        return " or ".join(f"({describe(q)})" for q in p.parts) or "always false"
    raise TypeError(f"not a predicate: {p!r}")


def _compare_values(op: str, left: FieldValue, right: FieldValue, field: str) -> Truth:
    if op in ("eq", "ne"):
        same = cell_key(left) == cell_key(right)
        ok = same if op == "eq" else not same
        return Truth.true() if ok else Truth.false(f"{field} {op} {right} failed for {left}")
    # ordered comparison: numbers with numbers, quantities within one unit,
    # text with text; anything else yields no fact
    if isinstance(left, Quantity) and isinstance(right, Quantity):
        if left.unit != right.unit:
            return Truth.unknown(f"{field}: unit {left.unit} not comparable with {right.unit}")
        lv, rv = left.amount, right.amount
    elif isinstance(left, (int, Decimal)) and isinstance(right, (int, Decimal)):
        lv, rv = left, right
    elif isinstance(left, str) and isinstance(right, str):
        lv, rv = left, right
    else:
        return Truth.unknown(f"{field}: {left!r} not comparable with {right!r}")
    c = 0 if lv == rv else (-1 if lv < rv else 1)
    if _OPS[op](c):
        return Truth.true()
    return Truth.false(f"{field} {op} {right} failed for {left}")


def eval_pred(p: Pred, lookup) -> Truth:
    """Three-valued evaluation; lookup maps a field name to its value."""
    if isinstance(p, Always):
        return Truth.true() if p.value else Truth.false("always false")
    if isinstance(p, FieldDefined):
        v = lookup(p.field)
        if isinstance(v, Missing):
            return Truth.false(f"{p.field} missing: {v.reason}")
        return Truth.true()
    if isinstance(p, Compare):
        v = lookup(p.field)
        if isinstance(v, Missing):
            return Truth.unknown(f"{p.field} missing: {v.reason}")
        return _compare_values(p.op, v, p.value, p.field)
    if isinstance(p, InSet):
        v = lookup(p.field)
        if isinstance(v, Missing):
            return Truth.unknown(f"{p.field} missing: {v.reason}")
        keys = {cell_key(x) for x in p.values}
        if cell_key(v) in keys:
            return Truth.true()
        return Truth.false(f"{p.field} value {v} not in allowed set")
    if isinstance(p, Not):
        t = eval_pred(p.inner, lookup)
        if t.state == "t":
            return Truth.false(f"negation of: {describe(p.inner)}")
        if t.state == "f":
            return Truth.true()
        return t
    if isinstance(p, All):
        pending = None
        for q in p.parts:
            t = eval_pred(q, lookup)
            if t.state == "f":
                return t
            if t.state == "u" and pending is None:
                pending = t
        return pending or Truth.true()
    if isinstance(p, AnyOf):
        pending = None
        reasons = []
        for q in p.parts:
            t = eval_pred(q, lookup)
            if t.state == "t":
                return t
            if t.state == "u" and pending is None:
                pending = t
            if t.state == "f":
                reasons.append(t.reason)
        if pending is not None:
            return pending
        return Truth.false("; ".join(reasons) or "always false")
    raise TypeError(f"not a predicate: {p!r}")


def holds(p: Pred, lookup) -> bool:
    """Collapsed two-valued view: unknown counts as not holding."""
    return eval_pred(p, lookup).state == "t"


# -- row expression AST -------------------------------------------------


@dataclass(frozen=True)
class Col:
    name: str


@dataclass(frozen=True)
class Lit:
    value: FieldValue


@dataclass(frozen=True)
class NumOf:
    """Numeric view of a cell: quantity amount, summary payload, or the number."""
    inner: "Expr"


@dataclass(frozen=True)
class UnitOf:
    inner: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # add sub mul
    left: "Expr"
    right: "Expr"


Expr = Col | Lit | NumOf | UnitOf | BinOp


def _as_number(v: FieldValue, where: str) -> Decimal:
    if isinstance(v, Decimal):
        return v
    if isinstance(v, bool):
        raise FnNotTotal(f"{where}: boolean is not a number")
    if isinstance(v, int):
        return Decimal(v)
    if isinstance(v, Quantity):
        return v.amount
    if isinstance(v, MonoidElement):
        if v.kind in (Kind.SUM, Kind.MIN, Kind.MAX):
            return v.payload
        if v.kind is Kind.COUNT:
            return Decimal(v.payload)
        raise FnNotTotal(f"{where}: no numeric view of a {v.kind.value} summary")
    raise FnNotTotal(f"{where}: {v!r} is not numeric")


def eval_expr(e: Expr, lookup) -> FieldValue:
    """Evaluate against a row; Missing operands propagate, never crash."""
    if isinstance(e, Col):
        v = lookup(e.name)
        if v is None:
            raise UnknownField(f"no field {e.name!r}")
        return v
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, NumOf):
        v = eval_expr(e.inner, lookup)
        if isinstance(v, Missing):
            return v
        return _as_number(v, "num")
    if isinstance(e, UnitOf):
        v = eval_expr(e.inner, lookup)
        if isinstance(v, Missing):
            return v
        if isinstance(v, Quantity):
            return v.unit
        raise FnNotTotal(f"unit_of: {v!r} has no unit")
    if isinstance(e, BinOp):
        lv = eval_expr(e.left, lookup)
        if isinstance(lv, Missing):
            return lv
        rv = eval_expr(e.right, lookup)
        if isinstance(rv, Missing):
            return rv
        ln = _as_number(lv, e.op)
        rn = _as_number(rv, e.op)
        if e.op == "add":
            return ln + rn
        if e.op == "sub":
            return ln - rn
        if e.op == "mul":
            return ln * rn
        raise FnNotTotal(f"unknown operator {e.op!r}")
    raise TypeError(f"not an expression: {e!r}")


# -- dict (de)serialization --------------------------------------------


def encode_value(v: FieldValue) -> object:
    if isinstance(v, Missing):
        return {"missing": v.reason}
    if isinstance(v, Quantity):
        return {"qty": [str(v.amount), v.unit]}
    if isinstance(v, Decimal):
        return {"dec": str(v)}
    if isinstance(v, (int, str)):
        return v
    raise TypeError(f"cannot encode {v!r}")


def decode_value(doc: object) -> FieldValue:
    if isinstance(doc, bool):
        raise ValueError("boolean literals are not field values")
    if isinstance(doc, (int, str)):
        return doc
    if isinstance(doc, float):
        return dec4(str(doc))
    if isinstance(doc, dict) and len(doc) == 1:
        key, body = next(iter(doc.items()))
        if key == "missing":
            return Missing(str(body))
        if key == "qty":
            amount, unit = body
            return Quantity(dec4(str(amount)), str(unit))
        if key == "dec":
            return dec4(str(body))
    raise ValueError(f"cannot decode value {doc!r}")


def encode_pred(p: Pred) -> dict:
    if isinstance(p, Always):
        return {"always": p.value}
    if isinstance(p, FieldDefined):
        return {"defined": p.field}
    if isinstance(p, Compare):
        return {"cmp": {"op": p.op, "field": p.field, "value": encode_value(p.value)}}
    if isinstance(p, InSet):
        return {"in": {"field": p.field, "values": [encode_value(v) for v in p.values]}}
    if isinstance(p, Not):
        return {"not": encode_pred(p.inner)}
    if isinstance(p, All):
        return {"all": [encode_pred(q) for q in p.parts]}
    if isinstance(p, AnyOf):
        return {"any": [encode_pred(q) for q in p.parts]}
    raise TypeError(f"not a predicate: {p!r}")


def decode_pred(doc: dict) -> Pred:
    if not isinstance(doc, dict) or len(doc) != 1:
        raise ValueError(f"bad predicate document: {doc!r}")
    key, body = next(iter(doc.items()))
    if key == "always":
        return Always(bool(body))
    if key == "defined":
        return FieldDefined(str(body))
    if key == "cmp":
        op = body["op"]
        if op not in _OPS:
            raise ValueError(f"unknown comparison {op!r}")
        return Compare(op, body["field"], decode_value(body["value"]))
    if key == "in":
        return InSet(body["field"], tuple(decode_value(v) for v in body["values"]))
    if key == "not":
        return Not(decode_pred(body))
    if key == "all":
        return All(tuple(decode_pred(q) for q in body))
    if key == "any":
        return AnyOf(tuple(decode_pred(q) for q in body))
    raise ValueError(f"unknown predicate form {key!r}")


def encode_expr(e: Expr) -> object:
    if isinstance(e, Col):
        return {"col": e.name}
    if isinstance(e, Lit):
        return {"lit": encode_value(e.value)}
    if isinstance(e, NumOf):
        return {"num": encode_expr(e.inner)}
    if isinstance(e, UnitOf):
        return {"unit_of": encode_expr(e.inner)}
    if isinstance(e, BinOp):
        return {e.op: [encode_expr(e.left), encode_expr(e.right)]}
    raise TypeError(f"not an expression: {e!r}")


def decode_expr(doc: object) -> Expr:
    if not isinstance(doc, dict) or len(doc) != 1:
        raise ValueError(f"bad expression document: {doc!r}")
    key, body = next(iter(doc.items()))
    if key == "col":
        return Col(str(body))
    if key == "lit":
        return Lit(decode_value(body))
    if key == "num":
        return NumOf(decode_expr(body))
    if key == "unit_of":
        return UnitOf(decode_expr(body))
    if key in ("add", "sub", "mul"):
        left, right = body
        return BinOp(key, decode_expr(left), decode_expr(right))
    raise ValueError(f"unknown expression form {key!r}")
