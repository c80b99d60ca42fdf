"""Measures over relations: per-record charges fused by a monoid."""

from decimal import Decimal

import pytest

from tallyflow import (
    FieldSpec,
    Kind,
    Missing,
    Quantity,
    SchemaMismatch,
    count_space,
    decimal_sum_space,
    disjoint_product,
    identity_space,
    ingest,
    paccioli_space,
    parallel_product,
    partition,
    quantity_sum_space,
    quantity_units,
    schema,
    Compare,
)
from tallyflow.space import project_info


D = Decimal

LEDGER = schema(
    FieldSpec("who", "text"),
    FieldSpec("amount", "decimal", "$"),
    FieldSpec("load", "quantity"),
)


def ledger():
    return ingest(LEDGER, [
        {"who": "ann", "amount": D("10.5"), "load": Quantity(D(2), "kg")},
        {"who": "bob", "amount": D("-3"), "load": Quantity(D(5), "kg")},
        {"who": "cid", "amount": Missing("empty"), "load": Quantity(D(1), "lb")},
    ])


def test_count_space_counts_provenance_not_rows():
    rel = ledger()
    assert count_space().measure(rel).payload == 3


def test_decimal_sum_space_sums_and_skips_missing():
    total = decimal_sum_space("amount", "$").measure(ledger())
    assert total.payload == D("7.5")
    assert total.unit == "$"


def test_quantity_sum_space_is_per_unit():
    rel = ledger()
    assert quantity_units(rel, "load") == ("kg", "lb")
    assert quantity_sum_space("load", "kg").measure(rel).payload == D(7)
    assert quantity_sum_space("load", "lb").measure(rel).payload == D(1)


def test_paccioli_space_keeps_both_legs():
    e = paccioli_space("amount", "$").measure(ledger())
    assert e.payload == (D("10.5"), D(3))


def test_measure_is_additive_over_a_partition():
    rel = ledger()
    space = decimal_sum_space("amount", "$")
    acc, rej = partition(rel, Compare("gt", "amount", D(0)))
    fused = space.fuse(space.measure(acc), space.measure(rej))
    assert fused == space.measure(rel)


def test_space_refuses_a_relation_without_its_field():
    bare = ingest(schema(FieldSpec("x", "integer")), [{"x": 1}])
    with pytest.raises(SchemaMismatch):
        decimal_sum_space("amount").measure(bare)


def test_identity_space_tells_relations_apart():
    ident = identity_space()
    a = ident.measure(ledger())
    other = ingest(LEDGER, [
        {"who": "ann", "amount": D("10.5"), "load": Quantity(D(2), "kg")},
    ])
    assert a != ident.measure(other)
    assert ident.measure(ledger()) == a


def test_parallel_product_measures_side_by_side():
    both = parallel_product(count_space(), decimal_sum_space("amount", "$"))
    e = both.measure(ledger())
    assert e.kind is Kind.TUPLE
    assert e.payload[0].payload == 3
    assert e.payload[1].payload == D("7.5")


def test_disjoint_product_rejects_shared_fields():
    with pytest.raises(SchemaMismatch):
        disjoint_product(
            decimal_sum_space("amount"), paccioli_space("amount"))


def test_disjoint_product_combines_separate_columns():
    space = disjoint_product(
        decimal_sum_space("amount", "$"), quantity_sum_space("load", "kg"))
    e = space.measure(ledger())
    assert e.payload[0].payload == D("7.5")
    assert e.payload[1].payload == D(7)


def test_projection_recovers_a_product_component():
    both = parallel_product(count_space(), decimal_sum_space("amount", "$"))
    left = project_info(both, "left")
    assert left.measure(ledger()).payload == 3
    with pytest.raises(SchemaMismatch):
        project_info(count_space(), "left")
