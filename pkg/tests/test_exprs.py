"""Row predicates and expressions: three-valued, total, serializable."""

from decimal import Decimal

import pytest

from tallyflow import (
    All,
    Always,
    AnyOf,
    BinOp,
    Col,
    Compare,
    DomainPredUnsound,
    FieldDefined,
    FieldSpec,
    FnNotTotal,
    InSet,
    Lit,
    Missing,
    Not,
    NumOf,
    Quantity,
    UnitOf,
    eval_expr,
    eval_pred,
    ingest,
    schema,
    totalize,
)
from tallyflow.exprs import (
    decode_expr,
    decode_pred,
    decode_value,
    describe,
    encode_expr,
    encode_pred,
    encode_value,
)


D = Decimal

ROW = {
    "i": 1,
    "d": D("1.5"),
    "t": "b",
    "q": Quantity(D(2), "kg"),
    "m": Missing("empty"),
}.__getitem__


def state(p):
    return eval_pred(p, ROW).state


# -- three-valued evaluation -------------------------------------------

def test_defined_is_two_valued():
    assert state(FieldDefined("i")) == "t"
    assert state(FieldDefined("m")) == "f"


def test_comparing_a_missing_cell_is_unknown_not_false():
    assert state(Compare("eq", "m", 1)) == "u"
    assert eval_pred(Compare("eq", "m", 1), ROW).reason == "m missing: empty"


def test_equality_is_strict_about_types():
    assert state(Compare("eq", "i", 1)) == "t"
    # numerically equal but differently typed cells stay distinct
    assert state(Compare("eq", "i", D("1.0000"))) == "f"
    assert state(Compare("ne", "i", "1")) == "t"


def test_ordered_compare_mixes_int_and_decimal():
    assert state(Compare("lt", "i", D("1.5"))) == "t"
    assert state(Compare("ge", "d", 1)) == "t"
    assert state(Compare("lt", "t", "c")) == "t"


def test_quantities_compare_within_one_unit_only():
    assert state(Compare("lt", "q", Quantity(D(5), "kg"))) == "t"
    assert state(Compare("lt", "q", Quantity(D(5), "lb"))) == "u"


def test_ordering_unlike_types_is_unknown():
    assert state(Compare("lt", "t", 5)) == "u"


def test_not_flips_and_keeps_unknown():
    assert state(Not(FieldDefined("m"))) == "t"
    assert state(Not(Compare("eq", "m", 1))) == "u"


def test_all_is_kleene_conjunction():
    t = Compare("eq", "i", 1)
    f = Compare("eq", "i", 2)
    u = Compare("eq", "m", 1)
    assert state(All((t, t))) == "t"
    assert state(All((t, u))) == "u"
    assert state(All((f, u))) == "f"
    assert state(All(())) == "t"


def test_any_is_kleene_disjunction():
    t = Compare("eq", "i", 1)
    f = Compare("eq", "i", 2)
    u = Compare("eq", "m", 1)
    assert state(AnyOf((t, u))) == "t"
    assert state(AnyOf((f, u))) == "u"
    assert state(AnyOf((f, f))) == "f"
    assert state(AnyOf(())) == "f"


def test_in_set_membership():
    assert state(InSet("t", ("a", "b"))) == "t"
    assert state(InSet("t", ("x",))) == "f"
    assert state(InSet("m", ("x",))) == "u"


def test_always_is_constant():
    assert state(Always(True)) == "t"
    assert state(Always(False)) == "f"


# -- expressions --------------------------------------------------------

def test_expressions_compute_numbers_and_units():
    assert eval_expr(NumOf(Col("q")), ROW) == D(2)
    assert eval_expr(UnitOf(Col("q")), ROW) == "kg"
    assert eval_expr(BinOp("add", NumOf(Col("q")), Lit(1)), ROW) == D(3)
    assert eval_expr(BinOp("sub", Col("d"), Col("i")), ROW) == D("0.5")
    assert eval_expr(BinOp("mul", Col("i"), Lit(4)), ROW) == D(4)


def test_missing_poisons_an_expression_quietly():
    out = eval_expr(BinOp("mul", Col("m"), Lit(2)), ROW)
    assert isinstance(out, Missing)


def test_expressions_refuse_nonsense_instead_of_guessing():
    with pytest.raises(FnNotTotal):
        eval_expr(NumOf(Col("t")), ROW)
    with pytest.raises(FnNotTotal):
        eval_expr(UnitOf(Col("i")), ROW)


def test_describe_reads_like_a_sentence():
    assert describe(FieldDefined("m")) == "m is defined"
    assert describe(Not(InSet("u", ("a", "b")))) == "not (u in {a, b})"


# -- totalization -------------------------------------------------------

def test_totalize_routes_by_domain_membership():
    rel = ingest(schema(FieldSpec("x", "integer")),
                 [{"x": 2}, {"x": Missing("gone")}])
    fn = totalize(lambda rec: rec.fields["x"] * 10, FieldDefined("x"))
    side1, out1 = fn(rel.rows[0])
    side2, out2 = fn(rel.rows[1])
    assert (side1, out1) == ("inr", 20)
    assert side2 == "inl" and out2 is rel.rows[1]


def test_a_lying_domain_predicate_is_called_out():
    rel = ingest(schema(FieldSpec("x", "integer")), [{"x": 0}])
    fn = totalize(lambda rec: 1 // rec.fields["x"], FieldDefined("x"))
    with pytest.raises(DomainPredUnsound):
        fn(rel.rows[0])


# -- serialization ------------------------------------------------------

def test_predicates_roundtrip_through_documents():
    p = All((Compare("ge", "age", 18),
             Not(InSet("name", ("x", "y"))),
             AnyOf((FieldDefined("z"), Always(True)))))
    assert decode_pred(encode_pred(p)) == p


def test_expressions_roundtrip_through_documents():
    e = BinOp("mul", NumOf(Col("a")), Lit(Quantity(D("1.5"), "kg")))
    assert decode_expr(encode_expr(e)) == e


def test_values_roundtrip_with_type_fidelity():
    for v in [1, "x", D("2.5"), Quantity(D(1), "kg"), Missing("gone")]:
        assert decode_value(encode_value(v)) == v
    assert isinstance(decode_value(encode_value(D("2.5"))), D)


def test_bad_documents_are_refused():
    with pytest.raises(ValueError):
        decode_pred({"frob": 1})
    with pytest.raises(ValueError):
        decode_expr({"div": [1, 2]})
    with pytest.raises(ValueError):
        decode_pred({"cmp": {"op": "like", "field": "x", "value": 1}})
