"""Randomized cross-check of the compiled pipelines against the oracle.

Each iteration builds a small catalog of duplicate-heavy tables and one
well-typed query, runs both the naive evaluator and the translated
pipeline, and compares.  Everything derives from the seed, so a failing
case can be replayed exactly by (seed, index).
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from random import Random

from .ops import AGG_OPS, AggSpec
from .ra import (
    Aggregate,
    BaseRelation,
    CrossProduct,
    Intersect,
    Map,
    Minus,
    NaturalJoin,
    OuterJoin,
    Project,
    RAExpr,
    Rename,
    Select,
    Union,
    UnionAll,
    _children,
    encode_query,
    equivalence_check,
)
from .exprs import (
    All,
    AnyOf,
    BinOp,
    Col,
    Compare,
    FieldDefined,
    InSet,
    Lit,
    Not,
    NumOf,
    UnitOf,
)
from .relation import FieldSpec, Relation, field_names, ingest, schema
from .values import Missing, Quantity

OPERATOR_KINDS = (Project, Select, Rename, CrossProduct, NaturalJoin, OuterJoin,
                  Union, UnionAll, Minus, Intersect, Aggregate, Map)

_TEXTS = ("red", "blue", "green", "ochre")
_INTS = (0, 1, 2, 7)
_DECS = (Decimal("0"), Decimal("1.5"), Decimal("2.25"), Decimal("-3"))
_UNITS = ("kg", "lb")
_AMOUNTS = (Decimal("1"), Decimal("2"), Decimal("5"))
_REASONS = ("empty", "n/a", "refused")
_SEMS = ("integer", "decimal", "text", "quantity")

MAX_ROWS = 50
SMALL_ROWS = 10
MAX_DEPTH = 4


class _Gen:
    """One iteration's tables and query, drawn from a private rng."""

    def __init__(self, rng: Random):
        self.rng = rng
        self.fresh_n = 0
        names = ["ca", "cb", "cc", "cd"]
        n_a = rng.randint(2, 4)
        a_specs = [self._spec(names[i]) for i in range(n_a)]
        shared = rng.sample(a_specs, rng.randint(1, min(2, n_a)))
        b_specs = list(shared)
        for nm in ("bx", "by")[:rng.randint(1, 2)]:
            b_specs.append(self._spec(nm))
        rng.shuffle(b_specs)
        self.sch_a = schema(*a_specs)
        self.sch_b = schema(*b_specs)
        self.tables = {
            "a1": self._table(self.sch_a, rng.randint(0, MAX_ROWS), 1),
            "a2": self._table(self.sch_a, rng.randint(0, MAX_ROWS), 1000),
            "b1": self._table(self.sch_b, rng.randint(0, SMALL_ROWS), 2000),
        }

    def _spec(self, name: str) -> FieldSpec:
        sem = self.rng.choice(_SEMS)
        unit = "$" if sem == "decimal" and self.rng.random() < 0.4 else None
        return FieldSpec(name, sem, unit)

    def fresh(self, prefix: str) -> str:
        self.fresh_n += 1
        return f"{prefix}{self.fresh_n}"

    def _cell(self, sem: str):
        r = self.rng
        if r.random() < 0.15:
            return Missing(r.choice(_REASONS))
        if sem == "text":
            return r.choice(_TEXTS)
        if sem == "integer":
            return r.choice(_INTS)
        if sem == "decimal":
            return r.choice(_DECS)
        return Quantity(r.choice(_AMOUNTS), r.choice(_UNITS))

    def _table(self, sch, n: int, first_pid: int) -> Relation:
        rows = [{s.name: self._cell(s.sem) for s in sch} for _ in range(n)]
        return ingest(sch, rows, first_pid=first_pid)

    # -- predicates and row expressions ---------------------------------

    def _atom(self, sch) -> object:
        r = self.rng
        spec = r.choice(list(sch))
        if spec.sem == "summary":
            return FieldDefined(spec.name)
        if r.random() < 0.2:
            return FieldDefined(spec.name)
        if spec.sem == "text":
            if r.random() < 0.4:
                return InSet(spec.name, tuple(r.sample(_TEXTS, 2)))
            return Compare(r.choice(("eq", "ne")), spec.name, r.choice(_TEXTS))
        op = r.choice(("eq", "ne", "lt", "le", "gt", "ge"))
        if spec.sem == "integer":
            return Compare(op, spec.name, r.choice(_INTS))
        if spec.sem == "decimal":
            return Compare(op, spec.name, r.choice(_DECS))
        return Compare(op, spec.name,
                       Quantity(r.choice(_AMOUNTS), r.choice(_UNITS)))

    def pred(self, sch, depth: int = 2) -> object:
        r = self.rng
        if depth <= 0 or r.random() < 0.5:
            return self._atom(sch)
        pick = r.random()
        if pick < 0.3:
            return Not(self.pred(sch, depth - 1))
        parts = tuple(self.pred(sch, depth - 1) for _ in range(2))
        return All(parts) if pick < 0.65 else AnyOf(parts)

    def map_expr(self, sch):
        r = self.rng
        numeric = [s for s in sch if s.sem in ("integer", "decimal", "quantity")]
        qty = [s for s in sch if s.sem == "quantity"]
        roll = r.random()
        if numeric and roll < 0.6:
            col = NumOf(Col(r.choice(numeric).name))
            if r.random() < 0.5:
                return BinOp(r.choice(("add", "sub", "mul")), col,
                             Lit(r.choice(_INTS)))
            return col
        if qty and roll < 0.8:
            return UnitOf(Col(r.choice(qty).name))
        if r.random() < 0.5:
            return Lit(r.choice(_DECS))
        return Lit(r.choice(_TEXTS))

    # -- expression families --------------------------------------------

    def base_a(self) -> RAExpr:
        return BaseRelation(self.rng.choice(("a1", "a2")))

    def samesch(self, depth: int) -> RAExpr:
        """Subtrees over the a-schema that keep it unchanged."""
        r = self.rng
        if depth <= 1 or r.random() < 0.4:
            return self.base_a()
        roll = r.random()
        if roll < 0.5:
            return Select(self.samesch(depth - 1), self.pred(self.sch_a))
        op = r.choice((Union, UnionAll, Minus, Intersect))
        return op(self.samesch(depth - 1), self.samesch(depth - 1))

    def b_side(self, depth: int) -> RAExpr:
        if depth <= 1 or self.rng.random() < 0.6:
            return BaseRelation("b1")
        return Select(self.b_side(depth - 1), self.pred(self.sch_b))

    def b_renamed(self, depth: int):
        """The small table with every field renamed fresh, for disjointness."""
        mapping = tuple((s.name, self.fresh("rn")) for s in self.sch_b)
        renamed = schema(*(
            FieldSpec(new, schema_of(self.sch_b, old).sem,
                      schema_of(self.sch_b, old).unit)
            for old, new in mapping))
        return Rename(self.b_side(depth), mapping), dict(mapping), renamed

    def any_expr(self, depth: int, mult: int) -> RAExpr:
        r = self.rng
        if depth <= 1:
            return r.choice((self.base_a(), BaseRelation("b1")))
        kinds = [Project, Select, Rename, Union, UnionAll, Minus, Intersect,
                 Aggregate, Map]
        if mult > 0:
            kinds += [CrossProduct, NaturalJoin, OuterJoin]
        return self.build(r.choice(kinds), depth, mult)

    def build(self, kind, depth: int, mult: int) -> RAExpr:
        r = self.rng
        if kind is Project:
            sub = self.any_expr(depth - 1, mult)
            names = list(field_names(self._sch(sub)))
            keep = r.sample(names, r.randint(1, len(names)))
            return Project(sub, tuple(keep))
        if kind is Select:
            sub = self.any_expr(depth - 1, mult)
            return Select(sub, self.pred(self._sch(sub)))
        if kind is Rename:
            sub = self.any_expr(depth - 1, mult)
            names = list(field_names(self._sch(sub)))
            take = r.sample(names, r.randint(1, min(2, len(names))))
            return Rename(sub, tuple((n, self.fresh("rn")) for n in take))
        if kind is CrossProduct:
            left = self.samesch(depth - 1)
            right, _, _ = self.b_renamed(depth - 1)
            return CrossProduct(left, right)
        if kind is NaturalJoin:
            if r.random() < 0.25:
                return NaturalJoin(self.samesch(depth - 1), self.base_a())
            return NaturalJoin(self.samesch(depth - 1), self.b_side(depth - 1))
        if kind is OuterJoin:
            left = self.samesch(depth - 1)
            right, mapping, _ = self.b_renamed(depth - 1)
            pairs = []
            for s in self.sch_a:
                for old, new in mapping.items():
                    if schema_of(self.sch_b, old).sem == s.sem:
                        pairs.append((s.name, new))
            take = r.sample(pairs, min(len(pairs), r.randint(1, 2)))
            return OuterJoin(left, right, tuple(take))
        if kind in (Union, UnionAll, Minus, Intersect):
            return kind(self.samesch(depth - 1), self.samesch(depth - 1))
        if kind is Aggregate:
            sub = self.any_expr(depth - 1, mult)
            return self._aggregate_over(sub)
        if kind is Map:
            sub = self.any_expr(depth - 1, mult)
            sch = self._sch(sub)
            n = r.randint(1, 2)
            return Map(sub, tuple(
                (self.fresh("mx"), self.map_expr(sch)) for _ in range(n)))
        raise ValueError(f"unknown kind {kind!r}")

    def _aggregate_over(self, sub: RAExpr) -> RAExpr:
        r = self.rng
        sch = self._sch(sub)
        if any(s.name == "count" for s in sch):
            sub = Rename(sub, (("count", self.fresh("rn")),))
            sch = self._sch(sub)
        names = set(field_names(sch))
        candidates = []
        for s in sch:
            for op in AGG_OPS:
                if op == "set":
                    ok = s.sem in ("integer", "text")
                else:
                    ok = s.sem in ("integer", "decimal", "quantity")
                if not ok or f"{s.name}_{op}" in names:
                    continue
                if s.sem == "quantity" and f"{s.name}_unit" in names:
                    continue
                candidates.append(AggSpec(s.name, op))
        specs = []
        taken = set()
        for spec in r.sample(candidates, min(len(candidates), r.randint(0, 2))):
            label = f"{spec.field}_{spec.op}"
            if label in taken:
                continue
            taken.add(label)
            specs.append(spec)
        spec_fields = {s.field for s in specs}
        pool = [n for n in field_names(sch)
                if n not in {f"{f}_unit" for f in spec_fields}]
        group_by = r.sample(pool, min(len(pool), r.randint(0, 2)))
        return Aggregate(sub, tuple(group_by), tuple(specs))

    def _sch(self, sub: RAExpr):
        from .ra import infer_schema
        return infer_schema(sub, {n: t.schema for n, t in self.tables.items()})


def schema_of(sch, name: str) -> FieldSpec:
    for s in sch:
        if s.name == name:
            return s
    raise KeyError(name)


def make_case(seed: int, index: int):
    """The (query, tables) pair for one iteration; pure function of both."""
    rng = Random(f"{seed}/{index}")
    gen = _Gen(rng)
    root = OPERATOR_KINDS[index % len(OPERATOR_KINDS)]
    expr = gen.build(root, MAX_DEPTH, 2)
    return expr, gen.tables


def node_kinds(expr: RAExpr) -> set:
    out = {type(expr).__name__}
    for _, child in _children(expr):
        out |= node_kinds(child)
    return out


@dataclass(frozen=True)
class FuzzReport:
    iterations: int
    failures: int
    first_failure: str
    kinds_seen: tuple


def run_fuzz(seed: int, iterations: int) -> FuzzReport:
    """Drive equivalence checks; deterministic for a given seed."""
    failures = 0
    first = ""
    seen: set = set()
    for i in range(iterations):
        expr, tables = make_case(seed, i)
        seen |= node_kinds(expr)
        verdict = equivalence_check(expr, tables)
        if not verdict.ok:
            failures += 1
            if not first:
                first = (f"iteration {i} (seed {seed}): {verdict.detail}\n"
                         f"query: {encode_query(expr)}")
    return FuzzReport(iterations, failures, first, tuple(sorted(seen)))
