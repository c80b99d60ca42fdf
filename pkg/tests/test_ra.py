"""The typed query layer: static checks, compilation and the cross-check."""

from decimal import Decimal

import pytest

from tallyflow import (
    AggSpec,
    Aggregate,
    BaseRelation,
    BinOp,
    Col,
    Compare,
    CrossProduct,
    ExprTypeError,
    FieldDefined,
    FieldSpec,
    Intersect,
    Lit,
    Map,
    Minus,
    Missing,
    NaturalJoin,
    NumOf,
    OuterJoin,
    Project,
    Quantity,
    Rename,
    Select,
    Union,
    UnionAll,
    decode_query,
    encode_query,
    equivalence_check,
    field_names,
    infer_schema,
    ingest,
    reference_eval,
    schema,
    translate,
)
from tallyflow.ra import base_names


D = Decimal

ITEMS = schema(
    FieldSpec("name", "text"),
    FieldSpec("commodity", "text"),
    FieldSpec("qty", "quantity"),
)
QUOTES = schema(
    FieldSpec("commodity", "text"),
    FieldSpec("price", "decimal", "$"),
)
CATALOG = {"items": ITEMS, "quotes": QUOTES}


def items():
    return ingest(ITEMS, [
        {"name": "grain", "commodity": "wheat", "qty": Quantity(D(200), "t")},
        {"name": "milk", "commodity": "milk", "qty": Quantity(D(5), "t")},
        {"name": "cat", "commodity": Missing("empty"), "qty": Quantity(D(1), "x")},
        {"name": "oil", "commodity": "nut oil", "qty": Quantity(D(9), "t")},
    ])


def quotes():
    return ingest(QUOTES, [
        {"commodity": "wheat", "price": D("6.10")},
        {"commodity": "wheat", "price": D("6.05")},
        {"commodity": "milk", "price": D("33.98")},
    ], 100)


def inputs():
    return {"items": items(), "quotes": quotes()}


# -- static typing ------------------------------------------------------

def test_schemas_flow_through_operators():
    q = Project(Select(BaseRelation("items"), FieldDefined("commodity")),
                ("name", "qty"))
    assert field_names(infer_schema(q, CATALOG)) == ("name", "qty")
    j = NaturalJoin(BaseRelation("items"), BaseRelation("quotes"))
    assert field_names(infer_schema(j, CATALOG)) == (
        "name", "commodity", "qty", "price")


def test_type_errors_carry_the_node_path():
    bad = Union(BaseRelation("items"),
                Project(BaseRelation("items"), ("ghost",)))
    with pytest.raises(ExprTypeError) as e:
        infer_schema(bad, CATALOG)
    assert "Union/right/Project" in str(e.value)
    mismatch = Union(BaseRelation("items"),
                     Project(BaseRelation("items"), ("name",)))
    with pytest.raises(ExprTypeError) as e2:
        infer_schema(mismatch, CATALOG)
    assert str(e2.value).startswith("Union:")


def test_type_errors_are_type_errors():
    with pytest.raises(TypeError):
        infer_schema(Project(BaseRelation("items"), ("ghost",)), CATALOG)


@pytest.mark.parametrize("bad", [
    BaseRelation("nope"),
    Project(BaseRelation("items"), ()),
    Project(BaseRelation("items"), ("name", "name")),
    Select(BaseRelation("items"), FieldDefined("ghost")),
    Rename(BaseRelation("items"), (("ghost", "x"),)),
    Rename(BaseRelation("items"), (("name", "qty"),)),
    CrossProduct(BaseRelation("items"), BaseRelation("items")),
    NaturalJoin(BaseRelation("quotes"),
                Rename(BaseRelation("quotes"),
                       (("commodity", "c"), ("price", "p")))),
    OuterJoin(BaseRelation("items"), BaseRelation("quotes"),
              (("name", "price"),)),
    Minus(BaseRelation("items"), BaseRelation("quotes")),
    Aggregate(BaseRelation("items"), ("ghost",), ()),
    Aggregate(BaseRelation("items"), (), (AggSpec("name", "sum"),)),
    Map(BaseRelation("items"), (("name", Lit(1)),)),
    Map(BaseRelation("items"), (("v", NumOf(Col("name"))),)),
])
def test_ill_typed_queries_are_rejected_up_front(bad):
    with pytest.raises(ExprTypeError):
        infer_schema(bad, CATALOG)


def test_map_types_literals_and_arithmetic():
    q = Map(BaseRelation("quotes"),
            (("double", BinOp("mul", NumOf(Col("price")), Lit(2))),))
    sch = infer_schema(q, CATALOG)
    assert sch[-1].sem == "decimal"
    lit = Map(BaseRelation("quotes"), (("w", Lit(Quantity(D(1), "kg"))),))
    spec = infer_schema(lit, CATALOG)[-1]
    assert (spec.sem, spec.unit) == ("quantity", "kg")


def test_base_names_walks_leaves_in_order():
    q = Union(
        Select(BaseRelation("items"), FieldDefined("name")),
        BaseRelation("items"))
    assert base_names(q) == ["items", "items"]


# -- compiled pipelines match the naive evaluator -----------------------

def check(expr, data=None):
    v = equivalence_check(expr, data or inputs())
    assert v.ok, v.detail
    assert v.conservation_ok
    return v


def test_select_matches_reference():
    check(Select(BaseRelation("items"), Compare("lt", "qty", Quantity(D(100), "t"))))


def test_project_matches_reference():
    check(Project(BaseRelation("items"), ("commodity",)))


def test_rename_matches_reference():
    check(Rename(BaseRelation("quotes"), (("price", "usd"),)))


def test_cross_product_matches_reference():
    disjoint = Rename(BaseRelation("quotes"),
                      (("commodity", "c"), ("price", "p")))
    v = check(CrossProduct(BaseRelation("items"), disjoint))
    assert v.got_rows == 12


def test_natural_join_matches_reference():
    v = check(NaturalJoin(BaseRelation("items"), BaseRelation("quotes")))
    assert v.got_rows == 3


def test_missing_keys_never_join():
    # the cat row's commodity is missing; it must not match anything,
    # it must land on the error side instead
    res = reference_eval(
        NaturalJoin(BaseRelation("items"), BaseRelation("quotes")), inputs())
    assert all(r.fields["name"] != "cat" for r in res.rows)


def test_outer_join_matches_reference():
    q = OuterJoin(
        BaseRelation("items"),
        Rename(BaseRelation("quotes"), (("commodity", "c"), ("price", "p"))),
        (("commodity", "c"),))
    v = check(q)
    assert v.got_rows == 5  # 3 matches, plus padded rows for cat and oil


def test_outer_join_pads_with_missing():
    q = OuterJoin(
        BaseRelation("items"),
        Rename(BaseRelation("quotes"), (("commodity", "c"), ("price", "p"))),
        (("commodity", "c"),))
    res = reference_eval(q, inputs())
    oil = [r for r in res.rows if r.fields["name"] == "oil"][0]
    assert isinstance(oil.fields["p"], Missing)


def test_union_dedups_and_union_all_does_not():
    doubled = Union(BaseRelation("items"), BaseRelation("items"))
    v = check(doubled)
    assert v.got_rows == 4
    v2 = check(UnionAll(BaseRelation("items"), BaseRelation("items")))
    assert v2.got_rows == 8


def test_minus_and_intersect_match_reference():
    some = Select(BaseRelation("items"), FieldDefined("commodity"))
    v = check(Minus(BaseRelation("items"), some))
    assert v.got_rows == 1  # only the cat row lacks a commodity
    v2 = check(Intersect(BaseRelation("items"), some))
    assert v2.got_rows == 3


def test_set_ops_treat_missing_rows_as_equal():
    # two relations that agree only up to the reason inside a missing cell
    sch = schema(FieldSpec("k", "text"))
    a = ingest(sch, [{"k": Missing("empty")}, {"k": "x"}])
    b = ingest(sch, [{"k": Missing("n/a")}], 10)
    v = check(Intersect(BaseRelation("a"), BaseRelation("b")),
              {"a": a, "b": b})
    assert v.got_rows == 1


def test_aggregate_matches_reference():
    q = Aggregate(BaseRelation("quotes"), ("commodity",),
                  (AggSpec("price", "min"),))
    v = check(q)
    assert v.got_rows == 2


def test_aggregate_subdivides_quantity_units():
    q = Aggregate(BaseRelation("items"), (), (AggSpec("qty", "sum"),))
    v = check(q)
    assert v.got_rows == 2  # tonnes and the cat's odd unit


def test_map_matches_reference():
    q = Map(BaseRelation("quotes"),
            (("cents", BinOp("mul", NumOf(Col("price")), Lit(100))),))
    check(q)


def test_deep_compositions_match_reference():
    q = Aggregate(
        Select(
            NaturalJoin(BaseRelation("items"), BaseRelation("quotes")),
            Compare("gt", "price", D(6))),
        ("commodity",),
        (AggSpec("price", "max"),))
    check(q)


def test_the_checker_can_see_a_divergence():
    # deliberately mistranslate: a union without its duplicate removal
    expr = Union(BaseRelation("items"), BaseRelation("items"))
    wrong = translate(UnionAll(BaseRelation("items"), BaseRelation("items")),
                      {"items": ITEMS})
    v = equivalence_check(expr, {"items": items()}, graph=wrong)
    assert not v.ok
    assert v.expected_rows == 4 and v.got_rows == 8


def test_translation_reports_every_input_pid_somewhere():
    q = Select(BaseRelation("items"), FieldDefined("commodity"))
    g = translate(q, {"items": ITEMS})
    res = g.run({"items": items()})
    seen = frozenset().union(*(rel and {p for r in rel.rows for p in r.pids}
                               for rel in res.sinks.values()))
    assert seen == frozenset({1, 2, 3, 4})


# -- query documents ----------------------------------------------------

def test_queries_roundtrip_through_documents():
    q = Aggregate(
        Select(
            OuterJoin(BaseRelation("items"),
                      Rename(BaseRelation("quotes"),
                             (("commodity", "c"), ("price", "p"))),
                      (("commodity", "c"),)),
            FieldDefined("p")),
        ("c",),
        (AggSpec("p", "avg"),))
    assert decode_query(encode_query(q)) == q
    u = Minus(UnionAll(BaseRelation("a"), BaseRelation("b")),
              Map(BaseRelation("c"), (("v", Lit(D("1.5"))),)))
    assert decode_query(encode_query(u)) == u


def test_bad_query_documents_are_refused():
    with pytest.raises(ValueError):
        decode_query({"frobnicate": {}})
    with pytest.raises(ValueError):
        decode_query({"project": {"of": {"base": "x"}}})
