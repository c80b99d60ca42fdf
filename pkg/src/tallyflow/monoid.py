"""Information-fusion monoids: the elements summaries are made of.

Each element kind carries a unit element and a binary fuse, plus a partial
order under which fusing is monotone.  Count/Sum/Avg/Set/Paccioli use growth
orders (fusing moves up); Min and Max use orders derived from fuse itself,
so fuse(a, b) sits below both a and b.  Max's order is reversed-numeric for
exactly that reason.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from decimal import Decimal

from .errors import KindMismatch
from .values import NEG_INF, POS_INF, cell_key, plain


class Kind(enum.Enum):
    COUNT = "count"
    SUM = "sum"
    MIN = "min"
    MAX = "max"
    AVG = "avg"
    SET = "set"
    PACCIOLI = "paccioli"
    TUPLE = "tuple"


# Kinds whose order is the one derived from fuse (a⋄b ≤ a and a⋄b ≤ b).
DERIVED_ORDER_KINDS = frozenset({Kind.MIN, Kind.MAX})


@dataclass(frozen=True)
class MonoidElement:
    """A single summary value: kind + payload + optional unit label.

    Payload shapes: COUNT int, SUM/MIN/MAX Decimal, AVG (sum, count),
    SET frozenset, PACCIOLI (debit, credit), TUPLE tuple of elements.
    """

    kind: Kind
    payload: object
    unit: str | None = None

    def __post_init__(self) -> None:
        k, p = self.kind, self.payload
        if k is Kind.COUNT:
            if not isinstance(p, int) or isinstance(p, bool) or p < 0:
                raise ValueError("count payload must be a nonnegative int")
        elif k in (Kind.SUM, Kind.MIN, Kind.MAX):
            if not isinstance(p, Decimal):
                raise ValueError(f"{k.value} payload must be a Decimal")
        elif k is Kind.AVG:
            s, c = _pair(p, "avg")
            if not isinstance(s, Decimal) or not isinstance(c, int):
                raise ValueError("avg payload must be (Decimal sum, int count)")
            if c < 0 or (c == 0 and s != 0):
                raise ValueError("avg invariant: count >= 0 and count == 0 implies sum == 0")
        elif k is Kind.SET:
            if not isinstance(p, frozenset):
                raise ValueError("set payload must be a frozenset")
        elif k is Kind.PACCIOLI:
            d, c = _pair(p, "paccioli")
            if not (isinstance(d, Decimal) and isinstance(c, Decimal)):
                raise ValueError("paccioli payload must be (Decimal, Decimal)")
            if d < 0 or c < 0:
                raise ValueError("paccioli legs must be nonnegative")
        elif k is Kind.TUPLE:
            if not isinstance(p, tuple) or not all(isinstance(e, MonoidElement) for e in p):
                raise ValueError("tuple payload must be a tuple of MonoidElements")

    # -- presentation ---------------------------------------------------

    def mean(self) -> Decimal | None:
        """Average as a number; division happens only here, at read time."""
        if self.kind is not Kind.AVG:
            raise KindMismatch("mean() only applies to avg elements")
        s, c = self.payload
        if c == 0:
            return None
        return (s / c).quantize(Decimal("0.0001"))

    def render(self) -> str:
        suffix = f" {self.unit}" if self.unit else ""
        k, p = self.kind, self.payload
        if k is Kind.COUNT:
            return str(p)
        if k in (Kind.SUM, Kind.MIN, Kind.MAX):
            return plain(p) + suffix
        if k is Kind.AVG:
            s, c = p
            m = self.mean()
            body = "n/a" if m is None else plain(m)
            return f"{body}{suffix} (n={c})"
        if k is Kind.SET:
            return "{" + ", ".join(str(v) for v in sorted(p, key=str)) + "}"
        if k is Kind.PACCIOLI:
            d, c = p
            return f"dr {plain(d)} / cr {plain(c)}{suffix}"
        return "(" + ", ".join(e.render() for e in p) + ")"

    def _cell_key(self) -> object:
        k, p = self.kind, self.payload
        if k in (Kind.SUM, Kind.MIN, Kind.MAX):
            body: object = plain(p)
        elif k is Kind.AVG:
            body = (plain(p[0]), p[1])
        elif k is Kind.PACCIOLI:
            body = (plain(p[0]), plain(p[1]))
        elif k is Kind.SET:
            body = tuple(sorted((cell_key(v) for v in p), key=repr))
        elif k is Kind.TUPLE:
            body = tuple(e._cell_key() for e in p)
        else:
            body = p
        return ("elem", k.value, self.unit, body)


def _pair(p: object, what: str) -> tuple:
    if not isinstance(p, tuple) or len(p) != 2:
        raise ValueError(f"{what} payload must be a 2-tuple")
    return p


# -- constructors -------------------------------------------------------

def count(n: int = 1) -> MonoidElement:
    return MonoidElement(Kind.COUNT, n)


def sum_of(value: Decimal, unit: str | None = None) -> MonoidElement:
    return MonoidElement(Kind.SUM, value, unit)


def min_of(value: Decimal, unit: str | None = None) -> MonoidElement:
    return MonoidElement(Kind.MIN, value, unit)


def max_of(value: Decimal, unit: str | None = None) -> MonoidElement:
    return MonoidElement(Kind.MAX, value, unit)


def avg_of(total: Decimal, n: int, unit: str | None = None) -> MonoidElement:
    return MonoidElement(Kind.AVG, (total, n), unit)


def set_of(ids) -> MonoidElement:
    return MonoidElement(Kind.SET, frozenset(ids))


def paccioli(debit: Decimal, credit: Decimal, unit: str | None = None) -> MonoidElement:
    return MonoidElement(Kind.PACCIOLI, (debit, credit), unit)


def paccioli_of_signed(value: Decimal, unit: str | None = None) -> MonoidElement:
    """Embed a signed amount as a debit (if >= 0) or a credit (if < 0)."""
    if value >= 0:
        return paccioli(value, Decimal(0), unit)
    return paccioli(Decimal(0), -value, unit)


def tuple_of(*elements: MonoidElement) -> MonoidElement:
    return MonoidElement(Kind.TUPLE, tuple(elements))


_UNITS = {
    Kind.COUNT: 0,
    Kind.SUM: Decimal(0),
    Kind.MIN: POS_INF,
    Kind.MAX: NEG_INF,
    Kind.AVG: (Decimal(0), 0),
    Kind.SET: frozenset(),
    Kind.PACCIOLI: (Decimal(0), Decimal(0)),
}


def unit_for(kind: Kind, unit: str | None = None) -> MonoidElement:
    """The identity element of a scalar kind (tuple units are built from parts)."""
    if kind is Kind.TUPLE:
        raise KindMismatch("tuple unit is built from component units")
    return MonoidElement(kind, _UNITS[kind], unit)


# -- fuse and order -----------------------------------------------------

def _check_compatible(a: MonoidElement, b: MonoidElement) -> None:
    if a.kind is not b.kind:
        raise KindMismatch(f"cannot combine {a.kind.value} with {b.kind.value}")
    if a.unit != b.unit:
        raise KindMismatch(f"unit mismatch: {a.unit!r} vs {b.unit!r}")
    if a.kind is Kind.TUPLE and len(a.payload) != len(b.payload):
        raise KindMismatch(f"tuple arity mismatch: {len(a.payload)} vs {len(b.payload)}")


def fuse(a: MonoidElement, b: MonoidElement) -> MonoidElement:
    """Combine two summaries of the same kind and unit."""
    _check_compatible(a, b)
    k = a.kind
    if k is Kind.COUNT or k is Kind.SUM:
        return MonoidElement(k, a.payload + b.payload, a.unit)
    if k is Kind.MIN:
        return MonoidElement(k, min(a.payload, b.payload), a.unit)
    if k is Kind.MAX:
        return MonoidElement(k, max(a.payload, b.payload), a.unit)
    if k is Kind.AVG:
        (s1, c1), (s2, c2) = a.payload, b.payload
        return MonoidElement(k, (s1 + s2, c1 + c2), a.unit)
    if k is Kind.SET:
        return MonoidElement(k, a.payload | b.payload)
    if k is Kind.PACCIOLI:
        (d1, c1), (d2, c2) = a.payload, b.payload
        return MonoidElement(k, (d1 + d2, c1 + c2), a.unit)
    return MonoidElement(k, tuple(fuse(x, y) for x, y in zip(a.payload, b.payload)))


def fuse_all(elements, start: MonoidElement) -> MonoidElement:
    acc = start
    for e in elements:
        acc = fuse(acc, e)
    return acc


def leq(a: MonoidElement, b: MonoidElement) -> bool:
    """Partial order per kind; KindMismatch when elements are incomparable."""
    _check_compatible(a, b)
    k = a.kind
    if k in (Kind.COUNT, Kind.SUM, Kind.MIN):
        return a.payload <= b.payload
    if k is Kind.MAX:
        # reversed so that fuse (numeric max) is a lower bound
        return a.payload >= b.payload
    if k in (Kind.AVG, Kind.PACCIOLI):
        (x1, y1), (x2, y2) = a.payload, b.payload
        return x1 <= x2 and y1 <= y2
    if k is Kind.SET:
        return a.payload <= b.payload
    return all(leq(x, y) for x, y in zip(a.payload, b.payload))


@dataclass(frozen=True)
class InformationMonoid:
    """A named monoid instance: its unit element fixes kind and unit label."""

    name: str
    unit: MonoidElement

    @property
    def kind(self) -> Kind:
        return self.unit.kind

    @property
    def derived_order(self) -> bool:
        k = self.kind
        if k is Kind.TUPLE:
            return all(e.kind in DERIVED_ORDER_KINDS for e in self.unit.payload)
        return k in DERIVED_ORDER_KINDS

    def fuse(self, a: MonoidElement, b: MonoidElement) -> MonoidElement:
        return fuse(a, b)

    def fuse_all(self, elements) -> MonoidElement:
        return fuse_all(elements, self.unit)

    def leq(self, a: MonoidElement, b: MonoidElement) -> bool:
        return leq(a, b)
