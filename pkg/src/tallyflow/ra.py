"""Classical relational queries compiled onto lossless pipelines.

The query AST here covers the textbook operators plus aggregation and
row-mapping.  translate() turns a well-typed query into a pipeline graph
whose "result" sink holds the classical answer while every row the
classical semantics would discard drains to labeled error sinks instead.
reference_eval() is a deliberately naive evaluator over plain dicts with
no shared code paths into the pipeline engine; equivalence_check() runs
both and compares the outcomes as multisets.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from decimal import Decimal

from .audit import conservation_check
from .errors import ExprTypeError, TallyError
from .exprs import (
    All,
    Always,
    AnyOf,
    BinOp,
    Col,
    Compare,
    Expr,
    FieldDefined,
    InSet,
    Lit,
    Not,
    NumOf,
    Pred,
    UnitOf,
    decode_expr,
    decode_pred,
    encode_expr,
    encode_pred,
)
from .monoid import MonoidElement, avg_of, count, max_of, min_of, set_of, sum_of
from .ops import AGG_OPS, AggSpec, aggregate_schema
from .pipeline import (
    ERROR,
    REPORT,
    AggregateNode,
    DedupNode,
    JoinNode,
    MapNode,
    PartitionNode,
    PipelineGraph,
    ProjectNode,
    RenameNode,
    StripTagsNode,
    TaggedUnionNode,
    TeeNode,
)
from .relation import (
    FieldSpec,
    Record,
    Relation,
    Schema,
    SumSchema,
    field_names,
    schema,
    schema_field,
)
from .values import Missing, Quantity, cell_key


# -- query AST ----------------------------------------------------------

@dataclass(frozen=True)
class BaseRelation:
    name: str


@dataclass(frozen=True)
class Project:
    of: "RAExpr"
    fields: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "fields", tuple(self.fields))


@dataclass(frozen=True)
class Select:
    of: "RAExpr"
    pred: Pred


@dataclass(frozen=True)
class Rename:
    """mapping is a tuple of (old, new) pairs."""

    of: "RAExpr"
    mapping: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "mapping", tuple(tuple(p) for p in self.mapping))


@dataclass(frozen=True)
class CrossProduct:
    left: "RAExpr"
    right: "RAExpr"


@dataclass(frozen=True)
class NaturalJoin:
    left: "RAExpr"
    right: "RAExpr"


@dataclass(frozen=True)
class OuterJoin:
    """Full outer equi-join; on is a tuple of (left field, right field)."""

    left: "RAExpr"
    right: "RAExpr"
    on: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "on", tuple(tuple(p) for p in self.on))


@dataclass(frozen=True)
class Union:
    left: "RAExpr"
    right: "RAExpr"


@dataclass(frozen=True)
class UnionAll:
    left: "RAExpr"
    right: "RAExpr"


@dataclass(frozen=True)
class Minus:
    left: "RAExpr"
    right: "RAExpr"


@dataclass(frozen=True)
class Intersect:
    left: "RAExpr"
    right: "RAExpr"


@dataclass(frozen=True)
class Aggregate:
    of: "RAExpr"
    group_by: tuple
    specs: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "group_by", tuple(self.group_by))
        object.__setattr__(self, "specs", tuple(self.specs))


@dataclass(frozen=True)
class Map:
    """additions is a tuple of (new field name, expression) pairs."""

    of: "RAExpr"
    additions: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "additions", tuple(tuple(p) for p in self.additions))


RAExpr = (BaseRelation | Project | Select | Rename | CrossProduct | NaturalJoin
          | OuterJoin | Union | UnionAll | Minus | Intersect | Aggregate | Map)

NODE_KINDS = (BaseRelation, Project, Select, Rename, CrossProduct, NaturalJoin,
              OuterJoin, Union, UnionAll, Minus, Intersect, Aggregate, Map)


def _label(e) -> str:
    return type(e).__name__


def _children(e):
    if isinstance(e, (Project, Select, Rename, Aggregate, Map)):
        return (("of", e.of),)
    if isinstance(e, (CrossProduct, NaturalJoin, OuterJoin, Union, UnionAll,
                      Minus, Intersect)):
        return (("left", e.left), ("right", e.right))
    return ()


def base_names(expr: RAExpr) -> list[str]:
    """Base relation names in leaf order, repeats kept."""
    if isinstance(expr, BaseRelation):
        return [expr.name]
    out: list[str] = []
    for _, child in _children(expr):
        out.extend(base_names(child))
    return out


# -- static typing ------------------------------------------------------

def _pred_fields(p: Pred) -> list[str]:
    if isinstance(p, Always):
        return []
    if isinstance(p, (FieldDefined, Compare, InSet)):
        return [p.field]
    if isinstance(p, Not):
        return _pred_fields(p.inner)
    if isinstance(p, (All, AnyOf)):
        return [f for q in p.parts for f in _pred_fields(q)]
    raise TypeError(f"not a predicate: {p!r}")


_NUMERIC = ("integer", "decimal", "quantity")


def infer_expr_sem(e: Expr, sch: Schema, path: str = "Expr"):
    """(sem, unit) a row expression produces over this schema."""
    def fail(msg: str):
        raise ExprTypeError(f"{path}: {msg}")

    if isinstance(e, Col):
        try:
            spec = schema_field(sch, e.name)
        except TallyError as exc:
            fail(str(exc))
        return spec.sem, spec.unit
    if isinstance(e, Lit):
        v = e.value
        if isinstance(v, bool):
            fail("boolean literals are not field values")
        if isinstance(v, int):
            return "integer", None
        if isinstance(v, Decimal):
            return "decimal", None
        if isinstance(v, str):
            return "text", None
        if isinstance(v, Quantity):
            return "quantity", v.unit
        fail(f"literal {v!r} has no field type")
    if isinstance(e, NumOf):
        sem, _ = infer_expr_sem(e.inner, sch, path)
        if sem not in _NUMERIC:
            fail(f"num applied to a {sem} value")
        return "decimal", None
    if isinstance(e, UnitOf):
        sem, _ = infer_expr_sem(e.inner, sch, path)
        if sem != "quantity":
            fail(f"unit_of applied to a {sem} value")
        return "text", None
    if isinstance(e, BinOp):
        for side in (e.left, e.right):
            sem, _ = infer_expr_sem(side, sch, path)
            if sem not in _NUMERIC:
                fail(f"{e.op} applied to a {sem} value")
        return "decimal", None
    fail(f"not a row expression: {e!r}")


def infer_schema(expr: RAExpr, catalog: dict) -> Schema:
    """Output schema of a query, or ExprTypeError naming the failing node."""
    return _infer(expr, catalog, _label(expr))


def _infer(expr: RAExpr, catalog: dict, path: str) -> Schema:
    def fail(msg: str):
        raise ExprTypeError(f"{path}: {msg}")

    def child(edge: str, e) -> Schema:
        return _infer(e, catalog, f"{path}/{edge}/{_label(e)}")

    if isinstance(expr, BaseRelation):
        sch = catalog.get(expr.name)
        if sch is None:
            fail(f"unknown base relation {expr.name!r}")
        if isinstance(sch, SumSchema):
            fail(f"base relation {expr.name!r} has a tagged-sum schema")
        return sch

    if isinstance(expr, Project):
        sch = child("of", expr.of)
        if not expr.fields:
            fail("projection keeps no fields")
        if len(set(expr.fields)) != len(expr.fields):
            fail(f"duplicate projection fields: {expr.fields}")
        for n in expr.fields:
            if not any(s.name == n for s in sch):
                fail(f"no field {n!r} to project")
        return schema(*(schema_field(sch, n) for n in expr.fields))

    if isinstance(expr, Select):
        sch = child("of", expr.of)
        names = set(field_names(sch))
        for n in _pred_fields(expr.pred):
            if n not in names:
                fail(f"predicate references unknown field {n!r}")
        return sch

    if isinstance(expr, Rename):
        sch = child("of", expr.of)
        names = field_names(sch)
        olds = [o for o, _ in expr.mapping]
        if len(set(olds)) != len(olds):
            fail(f"field renamed twice: {olds}")
        mapping = dict(expr.mapping)
        for o in mapping:
            if o not in names:
                fail(f"cannot rename unknown field {o!r}")
        new_names = [mapping.get(n, n) for n in names]
        if len(set(new_names)) != len(new_names):
            fail(f"rename would collide: {new_names}")
        return schema(*(
            FieldSpec(mapping.get(s.name, s.name), s.sem, s.unit) for s in sch))

    if isinstance(expr, CrossProduct):
        ls = child("left", expr.left)
        rs = child("right", expr.right)
        clash = set(field_names(ls)) & set(field_names(rs))
        if clash:
            fail(f"operands share field names: {sorted(clash)}")
        return schema(*(ls + rs))

    if isinstance(expr, NaturalJoin):
        ls = child("left", expr.left)
        rs = child("right", expr.right)
        rnames = set(field_names(rs))
        shared = [s.name for s in ls if s.name in rnames]
        if not shared:
            fail("no shared field to join on")
        for n in shared:
            if schema_field(ls, n) != schema_field(rs, n):
                fail(f"shared field {n!r} differs between operands")
        rest = tuple(s for s in rs if s.name not in shared)
        return schema(*(ls + rest))

    if isinstance(expr, OuterJoin):
        ls = child("left", expr.left)
        rs = child("right", expr.right)
        if not expr.on:
            fail("outer join needs at least one key pair")
        if len(set(expr.on)) != len(expr.on):
            fail(f"duplicate key pair in {expr.on}")
        lnames = set(field_names(ls))
        rnames = set(field_names(rs))
        for lf, rf in expr.on:
            if lf not in lnames:
                fail(f"left operand lacks key field {lf!r}")
            if rf not in rnames:
                fail(f"right operand lacks key field {rf!r}")
            lspec, rspec = schema_field(ls, lf), schema_field(rs, rf)
            if lspec.sem != rspec.sem:
                fail(f"key pair ({lf!r}, {rf!r}) mixes {lspec.sem} with {rspec.sem}")
            if lf == rf and lspec != rspec:
                fail(f"shared key field {lf!r} differs between operands")
        merged = {rf for lf, rf in expr.on if lf == rf}
        kept = tuple(s for s in rs if s.name not in merged)
        clash = lnames & {s.name for s in kept}
        if clash:
            fail(f"non-key field names collide: {sorted(clash)}")
        return schema(*(ls + kept))

    if isinstance(expr, (Union, UnionAll, Minus, Intersect)):
        ls = child("left", expr.left)
        rs = child("right", expr.right)
        if ls != rs:
            fail(f"operand schemas differ: {field_names(ls)} vs {field_names(rs)}")
        return ls

    if isinstance(expr, Aggregate):
        sch = child("of", expr.of)
        for spec in expr.specs:
            if not isinstance(spec, AggSpec) or spec.op not in AGG_OPS:
                fail(f"bad aggregation spec {spec!r}")
        try:
            return aggregate_schema(sch, expr.group_by, expr.specs)
        except TallyError as exc:
            fail(str(exc))

    if isinstance(expr, Map):
        sch = child("of", expr.of)
        names = set(field_names(sch))
        out = list(sch)
        for name, e in expr.additions:
            if name in names:
                fail(f"map would overwrite field {name!r}")
            names.add(name)
            sem, unit = infer_expr_sem(e, sch, path)
            out.append(FieldSpec(name, sem, unit))
        return schema(*out)

    fail(f"not a query node: {expr!r}")


# -- translation to a pipeline graph -----------------------------------

class _Translator:
    def __init__(self, catalog: dict, uses: Counter):
        self.catalog = catalog
        self.g = PipelineGraph("query")
        self.seq = 0
        self.base_outputs: dict[str, list[str]] = {}
        for name, k in uses.items():
            self.g.add_source(name, catalog[name])
            outs, cur = [], name
            for _ in range(k - 1):
                t = self.fresh("tee")
                self.g.add_node(TeeNode(t))
                self.g.connect(cur, f"{t}.in")
                outs.append(f"{t}.left")
                cur = f"{t}.right"
            outs.append(cur)
            self.base_outputs[name] = outs

    def fresh(self, slug: str) -> str:
        self.seq += 1
        return f"{slug}_{self.seq}"

    def drain(self, addr: str) -> None:
        """Sink an already-errorized output."""
        name = addr.replace(".", "_") + "_sink"
        self.g.add_sink(name, ERROR)
        self.g.connect(addr, name)

    def drain_mark(self, addr: str, slug: str, reason: str) -> None:
        """Errorize a plain output with a fixed reason, then sink it."""
        from .pipeline import ErrorizeNode
        m = self.fresh(slug)
        self.g.add_node(ErrorizeNode(m, reason))
        self.g.connect(addr, f"{m}.in")
        self.drain(f"{m}.out")

    def sch(self, expr: RAExpr) -> Schema:
        return infer_schema(expr, self.catalog)

    # each build method returns the address of the correct-stream output

    def build(self, expr: RAExpr) -> str:
        if isinstance(expr, BaseRelation):
            return self.base_outputs[expr.name].pop(0)
        if isinstance(expr, Project):
            src = self.build(expr.of)
            n = self.fresh("narrow")
            self.g.add_node(ProjectNode(n, tuple(expr.fields)))
            self.g.connect(src, f"{n}.in")
            return f"{n}.out"
        if isinstance(expr, Select):
            src = self.build(expr.of)
            n = self.fresh("select")
            self.g.add_node(PartitionNode(n, expr.pred, rejected_to_errors=True))
            self.g.connect(src, f"{n}.in")
            self.drain(f"{n}.rejected")
            return f"{n}.accepted"
        if isinstance(expr, Rename):
            src = self.build(expr.of)
            n = self.fresh("relabel")
            self.g.add_node(RenameNode(n, dict(expr.mapping)))
            self.g.connect(src, f"{n}.in")
            return f"{n}.out"
        if isinstance(expr, CrossProduct):
            l_addr, r_addr = self.build(expr.left), self.build(expr.right)
            j = self.fresh("pair")
            self.g.add_node(JoinNode(j, on=()))
            self.g.connect(l_addr, f"{j}.left")
            self.g.connect(r_addr, f"{j}.right")
            self.drain_mark(f"{j}.left_only", "alone", "no partner rows")
            self.drain_mark(f"{j}.right_only", "alone", "no partner rows")
            return f"{j}.inner"
        if isinstance(expr, NaturalJoin):
            return self._build_natural(expr)
        if isinstance(expr, OuterJoin):
            return self._build_outer(expr)
        if isinstance(expr, Union):
            l_addr, r_addr = self.build(expr.left), self.build(expr.right)
            u = self.fresh("merge")
            self.g.add_node(TaggedUnionNode(u))
            self.g.connect(l_addr, f"{u}.left")
            self.g.connect(r_addr, f"{u}.right")
            d = self.fresh("distinct")
            self.g.add_node(DedupNode(d))
            self.g.connect(f"{u}.out", f"{d}.in")
            s = self.fresh("untag")
            self.g.add_node(StripTagsNode(s))
            self.g.connect(f"{d}.out", f"{s}.in")
            return f"{s}.out"
        if isinstance(expr, UnionAll):
            l_addr, r_addr = self.build(expr.left), self.build(expr.right)
            u = self.fresh("merge")
            self.g.add_node(TaggedUnionNode(u))
            self.g.connect(l_addr, f"{u}.left")
            self.g.connect(r_addr, f"{u}.right")
            s = self.fresh("untag")
            self.g.add_node(StripTagsNode(s))
            self.g.connect(f"{u}.out", f"{s}.in")
            return f"{s}.out"
        if isinstance(expr, (Minus, Intersect)):
            return self._build_membership(expr)
        if isinstance(expr, Aggregate):
            src = self.build(expr.of)
            referenced = list(dict.fromkeys(
                tuple(expr.group_by) + tuple(s.field for s in expr.specs)))
            q = self.fresh("require")
            self.g.add_node(PartitionNode(
                q, All(tuple(FieldDefined(f) for f in referenced)),
                rejected_to_errors=True))
            self.g.connect(src, f"{q}.in")
            self.drain(f"{q}.rejected")
            a = self.fresh("summarize")
            self.g.add_node(AggregateNode(a, tuple(expr.group_by), tuple(expr.specs)))
            self.g.connect(f"{q}.accepted", f"{a}.in")
            return f"{a}.out"
        if isinstance(expr, Map):
            src = self.build(expr.of)
            sch = self.sch(expr.of)
            sems, units = {}, {}
            for name, e in expr.additions:
                sems[name], units[name] = infer_expr_sem(e, sch)
            m = self.fresh("derive")
            self.g.add_node(MapNode(m, dict(expr.additions), sems, units=units))
            self.g.connect(src, f"{m}.in")
            return f"{m}.out"
        raise ExprTypeError(f"not a query node: {expr!r}")

    def _require_defined(self, addr: str, keys, to_errors: bool) -> str:
        q = self.fresh("require")
        self.g.add_node(PartitionNode(
            q, All(tuple(FieldDefined(k) for k in keys)),
            rejected_to_errors=to_errors))
        self.g.connect(addr, f"{q}.in")
        if to_errors:
            self.drain(f"{q}.rejected")
        return q

    def _build_natural(self, expr: NaturalJoin) -> str:
        ls, rs = self.sch(expr.left), self.sch(expr.right)
        rnames = set(field_names(rs))
        shared = [s.name for s in ls if s.name in rnames]
        l_addr, r_addr = self.build(expr.left), self.build(expr.right)
        lq = self._require_defined(l_addr, shared, to_errors=True)
        rq = self._require_defined(r_addr, shared, to_errors=True)
        j = self.fresh("join")
        self.g.add_node(JoinNode(j, on=tuple((c, c) for c in shared)))
        self.g.connect(f"{lq}.accepted", f"{j}.left")
        self.g.connect(f"{rq}.accepted", f"{j}.right")
        self.drain_mark(f"{j}.left_only", "unmatched", "no match")
        self.drain_mark(f"{j}.right_only", "unmatched", "no match")
        return f"{j}.inner"

    def _build_outer(self, expr: OuterJoin) -> str:
        ls, rs = self.sch(expr.left), self.sch(expr.right)
        on = tuple(expr.on)
        merged = {rf for lf, rf in on if lf == rf}
        kept = tuple(s for s in rs if s.name not in merged)
        inner_names = field_names(ls) + tuple(s.name for s in kept)

        l_addr, r_addr = self.build(expr.left), self.build(expr.right)
        lq = self._require_defined(l_addr, [lf for lf, _ in on], to_errors=False)
        rq = self._require_defined(r_addr, [rf for _, rf in on], to_errors=False)
        j = self.fresh("join")
        self.g.add_node(JoinNode(j, on=on))
        self.g.connect(f"{lq}.accepted", f"{j}.left")
        self.g.connect(f"{rq}.accepted", f"{j}.right")

        def gather(a: str, b: str) -> str:
            u = self.fresh("gather")
            self.g.add_node(TaggedUnionNode(u))
            self.g.connect(a, f"{u}.left")
            self.g.connect(b, f"{u}.right")
            s = self.fresh("untag")
            self.g.add_node(StripTagsNode(s))
            self.g.connect(f"{u}.out", f"{s}.in")
            return f"{s}.out"

        # rows with an undefined key and rows with no partner both surface
        # in the outer result, padded on the other side
        left_in = gather(f"{j}.left_only", f"{lq}.rejected")
        lp = self.fresh("pad")
        self.g.add_node(MapNode(
            lp,
            {s.name: Lit(Missing("no match")) for s in kept},
            {s.name: s.sem for s in kept},
            units={s.name: s.unit for s in kept}))
        self.g.connect(left_in, f"{lp}.in")

        right_in = gather(f"{j}.right_only", f"{rq}.rejected")
        rest = tuple(s for s in ls if s.name not in merged)
        rp = self.fresh("pad")
        self.g.add_node(MapNode(
            rp,
            {s.name: Lit(Missing("no match")) for s in rest},
            {s.name: s.sem for s in rest},
            units={s.name: s.unit for s in rest}))
        self.g.connect(right_in, f"{rp}.in")
        ro = self.fresh("reorder")
        self.g.add_node(ProjectNode(ro, inner_names))
        self.g.connect(f"{rp}.out", f"{ro}.in")

        merged_out = gather(f"{j}.inner", f"{lp}.out")
        return gather(merged_out, f"{ro}.out")

    def _build_membership(self, expr) -> str:
        ls = self.sch(expr.left)
        names = field_names(ls)
        l_addr, r_addr = self.build(expr.left), self.build(expr.right)
        da = self.fresh("distinct")
        self.g.add_node(DedupNode(da))
        self.g.connect(l_addr, f"{da}.in")
        db = self.fresh("distinct")
        self.g.add_node(DedupNode(db))
        self.g.connect(r_addr, f"{db}.in")
        j = self.fresh("member")
        self.g.add_node(JoinNode(
            j, on=tuple((n, n) for n in names), missing_matches=True))
        self.g.connect(f"{da}.out", f"{j}.left")
        self.g.connect(f"{db}.out", f"{j}.right")
        if isinstance(expr, Minus):
            self.drain_mark(f"{j}.inner", "shared", "present in both operands")
            self.drain_mark(f"{j}.right_only", "unmatched", "only in right operand")
            return f"{j}.left_only"
        self.drain_mark(f"{j}.left_only", "unmatched", "only in left operand")
        self.drain_mark(f"{j}.right_only", "unmatched", "only in right operand")
        return f"{j}.inner"


def translate(expr: RAExpr, catalog: dict) -> PipelineGraph:
    """Compile a well-typed query into a runnable pipeline graph.

    The classical answer lands in the "result" report sink; everything the
    classical semantics would drop drains to error sinks, so the run's
    conservation checks cover the whole input.
    """
    infer_schema(expr, catalog)
    uses = Counter(base_names(expr))
    tr = _Translator(catalog, uses)
    out = tr.build(expr)
    tr.g.add_sink("result", REPORT)
    tr.g.connect(out, "result")
    tr.g.add_conservation("count")
    qty, dec, seen = [], [], set()
    for name in uses:
        for s in catalog[name]:
            if s.name in seen:
                continue
            seen.add(s.name)
            if s.sem == "quantity":
                qty.append(s.name)
            elif s.sem == "decimal":
                dec.append(s.name)
    for f in qty:
        tr.g.add_conservation("sum_by_unit", f)
    for f in dec:
        tr.g.add_conservation("paccioli", f)
    return tr.g


# -- naive reference evaluator ------------------------------------------

def _o_cmp(op: str, left, right):
    """True/False, or None when the pair supports no ordered fact."""
    if op in ("eq", "ne"):
        same = cell_key(left) == cell_key(right)
        return same if op == "eq" else not same
    if isinstance(left, Quantity) and isinstance(right, Quantity):
        if left.unit != right.unit:
            return None
        a, b = left.amount, right.amount
    elif isinstance(left, (int, Decimal)) and isinstance(right, (int, Decimal)):
        a, b = left, right
    elif isinstance(left, str) and isinstance(right, str):
        a, b = left, right
    else:
        return None
    return {"lt": a < b, "le": a <= b, "gt": a > b, "ge": a >= b}[op]


def _o_pred(p: Pred, row: dict):
    """Three-valued: True, False, or None for no-fact."""
    if isinstance(p, Always):
        return p.value
    if isinstance(p, FieldDefined):
        return not isinstance(row[p.field], Missing)
    if isinstance(p, Compare):
        v = row[p.field]
        if isinstance(v, Missing):
            return None
        return _o_cmp(p.op, v, p.value)
    if isinstance(p, InSet):
        v = row[p.field]
        if isinstance(v, Missing):
            return None
        return cell_key(v) in {cell_key(x) for x in p.values}
    if isinstance(p, Not):
        t = _o_pred(p.inner, row)
        return None if t is None else not t
    if isinstance(p, All):
        parts = [_o_pred(q, row) for q in p.parts]
        if False in parts:
            return False
        return None if None in parts else True
    if isinstance(p, AnyOf):
        parts = [_o_pred(q, row) for q in p.parts]
        if True in parts:
            return True
        return None if None in parts else False
    raise TypeError(f"not a predicate: {p!r}")


def _o_num(v) -> Decimal:
    if isinstance(v, Decimal):
        return v
    if isinstance(v, int):
        return Decimal(v)
    if isinstance(v, Quantity):
        return v.amount
    raise TypeError(f"no numeric view of {v!r}")


def _o_expr(e: Expr, row: dict):
    if isinstance(e, Col):
        return row[e.name]
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, NumOf):
        v = _o_expr(e.inner, row)
        return v if isinstance(v, Missing) else _o_num(v)
    if isinstance(e, UnitOf):
        v = _o_expr(e.inner, row)
        return v if isinstance(v, Missing) else v.unit
    if isinstance(e, BinOp):
        a = _o_expr(e.left, row)
        if isinstance(a, Missing):
            return a
        b = _o_expr(e.right, row)
        if isinstance(b, Missing):
            return b
        x, y = _o_num(a), _o_num(b)
        return {"add": x + y, "sub": x - y, "mul": x * y}[e.op]
    raise TypeError(f"not a row expression: {e!r}")


def row_key(fields: dict) -> tuple:
    """Order-free canonical identity of one row's field values."""
    return tuple(sorted((n, cell_key(v)) for n, v in fields.items()))


def _distinct(rows: list) -> list:
    seen, out = set(), []
    for r in rows:
        k = row_key(r)
        if k not in seen:
            seen.add(k)
            out.append(r)
    return out


def _r_eval(expr: RAExpr, inputs: dict, catalog: dict) -> list:
    if isinstance(expr, BaseRelation):
        return [dict(rec.fields) for rec in inputs[expr.name].rows]

    if isinstance(expr, Project):
        sub = _r_eval(expr.of, inputs, catalog)
        return [{n: r[n] for n in expr.fields} for r in sub]

    if isinstance(expr, Select):
        sub = _r_eval(expr.of, inputs, catalog)
        return [r for r in sub if _o_pred(expr.pred, r) is True]

    if isinstance(expr, Rename):
        sub = _r_eval(expr.of, inputs, catalog)
        m = dict(expr.mapping)
        return [{m.get(n, n): v for n, v in r.items()} for r in sub]

    if isinstance(expr, CrossProduct):
        xs = _r_eval(expr.left, inputs, catalog)
        ys = _r_eval(expr.right, inputs, catalog)
        return [{**x, **y} for x in xs for y in ys]

    if isinstance(expr, NaturalJoin):
        ls = _infer(expr.left, catalog, "oracle")
        rs = _infer(expr.right, catalog, "oracle")
        rnames = set(field_names(rs))
        shared = [s.name for s in ls if s.name in rnames]
        rest = [s.name for s in rs if s.name not in shared]
        xs = _r_eval(expr.left, inputs, catalog)
        ys = _r_eval(expr.right, inputs, catalog)
        out = []
        for x in xs:
            for y in ys:
                if all(not isinstance(x[c], Missing)
                       and not isinstance(y[c], Missing)
                       and cell_key(x[c]) == cell_key(y[c]) for c in shared):
                    row = dict(x)
                    row.update({n: y[n] for n in rest})
                    out.append(row)
        return out

    if isinstance(expr, OuterJoin):
        ls = _infer(expr.left, catalog, "oracle")
        rs = _infer(expr.right, catalog, "oracle")
        on = tuple(expr.on)
        merged = {rf for lf, rf in on if lf == rf}
        kept = [s.name for s in rs if s.name not in merged]
        xs = _r_eval(expr.left, inputs, catalog)
        ys = _r_eval(expr.right, inputs, catalog)

        def match(x, y):
            for lf, rf in on:
                a, b = x[lf], y[rf]
                if isinstance(a, Missing) or isinstance(b, Missing):
                    return False
                if cell_key(a) != cell_key(b):
                    return False
            return True

        out = []
        x_hit = [False] * len(xs)
        y_hit = [False] * len(ys)
        for i, x in enumerate(xs):
            for jj, y in enumerate(ys):
                if match(x, y):
                    x_hit[i] = y_hit[jj] = True
                    row = dict(x)
                    row.update({n: y[n] for n in kept})
                    out.append(row)
        for i, x in enumerate(xs):
            if not x_hit[i]:
                row = dict(x)
                row.update({n: Missing("no match") for n in kept})
                out.append(row)
        for jj, y in enumerate(ys):
            if not y_hit[jj]:
                row = {s.name: (y[s.name] if s.name in merged
                                else Missing("no match")) for s in ls}
                row.update({n: y[n] for n in kept})
                out.append(row)
        return out

    if isinstance(expr, Union):
        xs = _r_eval(expr.left, inputs, catalog)
        ys = _r_eval(expr.right, inputs, catalog)
        return _distinct(xs + ys)

    if isinstance(expr, UnionAll):
        return (_r_eval(expr.left, inputs, catalog)
                + _r_eval(expr.right, inputs, catalog))

    if isinstance(expr, (Minus, Intersect)):
        xs = _r_eval(expr.left, inputs, catalog)
        ys = _r_eval(expr.right, inputs, catalog)
        there = {row_key(y) for y in ys}
        if isinstance(expr, Minus):
            return [x for x in _distinct(xs) if row_key(x) not in there]
        return [x for x in _distinct(xs) if row_key(x) in there]

    if isinstance(expr, Aggregate):
        return _r_eval_aggregate(expr, inputs, catalog)

    if isinstance(expr, Map):
        sub = _r_eval(expr.of, inputs, catalog)
        out = []
        for r in sub:
            row = dict(r)
            for name, e in expr.additions:
                row[name] = _o_expr(e, r)
            out.append(row)
        return out

    raise TypeError(f"not a query node: {expr!r}")


def _r_eval_aggregate(expr: Aggregate, inputs: dict, catalog: dict) -> list:
    sch = _infer(expr.of, catalog, "oracle")
    keys = tuple(expr.group_by)
    referenced = list(dict.fromkeys(keys + tuple(s.field for s in expr.specs)))
    rows = [r for r in _r_eval(expr.of, inputs, catalog)
            if not any(isinstance(r[f], Missing) for f in referenced)]
    qty_fields = []
    for spec in expr.specs:
        if schema_field(sch, spec.field).sem == "quantity" and spec.field not in qty_fields:
            qty_fields.append(spec.field)

    groups: dict = {}
    order = []
    for r in rows:
        gvals = {n: r[n] for n in keys}
        for f in qty_fields:
            gvals[f"{f}_unit"] = r[f].unit
        gk = tuple(cell_key(v) for v in gvals.values())
        if gk not in groups:
            groups[gk] = (gvals, [])
            order.append(gk)
        groups[gk][1].append(r)

    out = []
    for gk in order:
        gvals, members = groups[gk]
        row = dict(gvals)
        for spec in expr.specs:
            fspec = schema_field(sch, spec.field)
            unit = (gvals[f"{spec.field}_unit"] if fspec.sem == "quantity"
                    else fspec.unit)
            values = [m[spec.field] for m in members]
            row[f"{spec.field}_{spec.op}"] = _o_agg_cell(spec.op, values, unit)
        row["count"] = count(len(members))
        out.append(row)
    return out


def _o_agg_cell(op: str, values: list, unit) -> MonoidElement:
    if op == "set":
        return set_of(values)
    nums = [_o_num(v) for v in values]
    if op == "sum":
        return sum_of(sum(nums, Decimal(0)), unit)
    if op == "min":
        return min_of(min(nums), unit)
    if op == "max":
        return max_of(max(nums), unit)
    return avg_of(sum(nums, Decimal(0)), len(nums), unit)


def reference_eval(expr: RAExpr, inputs: dict) -> Relation:
    """Evaluate by direct enumeration over plain dicts.

    Shares only the value vocabulary with the pipeline engine, none of its
    operator code, so the two can check each other.
    """
    catalog = {name: rel.schema for name, rel in inputs.items()}
    out_schema = infer_schema(expr, catalog)
    rows = _r_eval(expr, inputs, catalog)
    recs = tuple(
        Record(pids=frozenset({i + 1}), fields=dict(r))
        for i, r in enumerate(rows))
    return Relation(out_schema, recs)


# -- equivalence verdicts -----------------------------------------------

@dataclass(frozen=True)
class Verdict:
    ok: bool
    detail: str
    expected_rows: int
    got_rows: int
    conservation_ok: bool


def _show_row(fields: dict) -> str:
    return ", ".join(f"{n}={v}" for n, v in fields.items())


def equivalence_check(expr: RAExpr, inputs: dict, graph: PipelineGraph | None = None) -> Verdict:
    """Run the naive evaluator and the compiled pipeline; compare multisets.

    graph overrides the compiled pipeline, which negative-control tests
    use to prove the checker can see a divergence.
    """
    catalog = {name: rel.schema for name, rel in inputs.items()}
    try:
        expected = reference_eval(expr, inputs)
        g = graph if graph is not None else translate(expr, catalog)
        bad = g.validate()
        if bad:
            head = "; ".join(f"{v.kind}@{v.where}" for v in bad[:3])
            return Verdict(False, f"graph does not validate: {head}",
                           len(expected.rows), 0, False)
        result = g.run({n: inputs[n] for n in g.sources})
    except TallyError as exc:
        return Verdict(False, f"{type(exc).__name__}: {exc}", 0, 0, False)

    got = result.sinks["result"]
    want = Counter(row_key(rec.fields) for rec in expected.rows)
    have = Counter(row_key(rec.fields) for rec in got.rows)
    cons = conservation_check(result.audit)

    if want != have:
        for rec in expected.rows:
            k = row_key(rec.fields)
            if want[k] != have[k]:
                detail = (f"row expected {want[k]}x but produced {have[k]}x: "
                          f"{_show_row(rec.fields)}")
                break
        else:
            for rec in got.rows:
                k = row_key(rec.fields)
                if want[k] != have[k]:
                    detail = (f"row produced {have[k]}x but expected {want[k]}x: "
                              f"{_show_row(rec.fields)}")
                    break
            else:
                detail = "multisets differ"
        return Verdict(False, detail, len(expected.rows), len(got.rows), cons.ok)

    if not cons.ok:
        first = next(c for c in cons.checks if not c.ok)
        return Verdict(False, f"conservation: {first.name}: {first.detail}",
                       len(expected.rows), len(got.rows), False)
    return Verdict(True, "", len(expected.rows), len(got.rows), True)


# -- structured documents -----------------------------------------------

def encode_query(expr: RAExpr) -> dict:
    if isinstance(expr, BaseRelation):
        return {"base": expr.name}
    if isinstance(expr, Project):
        return {"project": {"of": encode_query(expr.of),
                            "fields": list(expr.fields)}}
    if isinstance(expr, Select):
        return {"select": {"of": encode_query(expr.of),
                           "when": encode_pred(expr.pred)}}
    if isinstance(expr, Rename):
        return {"rename": {"of": encode_query(expr.of),
                           "map": {o: n for o, n in expr.mapping}}}
    if isinstance(expr, CrossProduct):
        return {"cross": _enc_pair(expr)}
    if isinstance(expr, NaturalJoin):
        return {"natural_join": _enc_pair(expr)}
    if isinstance(expr, OuterJoin):
        d = _enc_pair(expr)
        d["on"] = [list(p) for p in expr.on]
        return {"outer_join": d}
    if isinstance(expr, Union):
        return {"union": _enc_pair(expr)}
    if isinstance(expr, UnionAll):
        return {"union_all": _enc_pair(expr)}
    if isinstance(expr, Minus):
        return {"minus": _enc_pair(expr)}
    if isinstance(expr, Intersect):
        return {"intersect": _enc_pair(expr)}
    if isinstance(expr, Aggregate):
        return {"aggregate": {
            "of": encode_query(expr.of),
            "by": list(expr.group_by),
            "specs": [{"field": s.field, "op": s.op} for s in expr.specs]}}
    if isinstance(expr, Map):
        return {"map": {"of": encode_query(expr.of),
                        "add": [{"field": n, "expr": encode_expr(e)}
                                for n, e in expr.additions]}}
    raise TypeError(f"not a query node: {expr!r}")


def _enc_pair(expr) -> dict:
    return {"left": encode_query(expr.left), "right": encode_query(expr.right)}


def decode_query(doc: dict) -> RAExpr:
    if not isinstance(doc, dict) or len(doc) != 1:
        raise ValueError(f"a query document has exactly one key: {doc!r}")
    kind, body = next(iter(doc.items()))
    try:
        return _dec_node(kind, body)
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValueError(f"malformed {kind!r} query document: {exc}") from exc


def _dec_node(kind: str, body) -> RAExpr:
    if kind == "base":
        return BaseRelation(body)
    if kind == "project":
        return Project(decode_query(body["of"]), tuple(body["fields"]))
    if kind == "select":
        return Select(decode_query(body["of"]), decode_pred(body["when"]))
    if kind == "rename":
        return Rename(decode_query(body["of"]), tuple(body["map"].items()))
    if kind == "cross":
        return CrossProduct(*_dec_pair(body))
    if kind == "natural_join":
        return NaturalJoin(*_dec_pair(body))
    if kind == "outer_join":
        left, right = _dec_pair(body)
        return OuterJoin(left, right, tuple(tuple(p) for p in body["on"]))
    if kind == "union":
        return Union(*_dec_pair(body))
    if kind == "union_all":
        return UnionAll(*_dec_pair(body))
    if kind == "minus":
        return Minus(*_dec_pair(body))
    if kind == "intersect":
        return Intersect(*_dec_pair(body))
    if kind == "aggregate":
        return Aggregate(
            decode_query(body["of"]),
            tuple(body.get("by", ())),
            tuple(AggSpec(s["field"], s["op"]) for s in body.get("specs", ())))
    if kind == "map":
        return Map(
            decode_query(body["of"]),
            tuple((a["field"], decode_expr(a["expr"])) for a in body["add"]))
    raise ValueError(f"unknown query node kind {kind!r}")


def _dec_pair(body: dict):
    return decode_query(body["left"]), decode_query(body["right"])
