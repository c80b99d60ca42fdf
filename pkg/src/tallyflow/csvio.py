"""CSV ingestion and emission, driven by per-table column descriptions.

A table's CSV file travels with a small YAML description saying how each
column parses: its type, an optional unit, which cell texts stand for
absent values, and what an empty cell means.  Rows that fail to parse are
never dropped and never abort the load; they land in a separate error
relation, raw text preserved, with the usual stage and reason columns.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from decimal import Decimal

import yaml

from .errors import SchemaMismatch
from .monoid import MonoidElement
from .relation import (
    ERROR_REASON,
    ERROR_STAGE,
    FieldSpec,
    Record,
    Relation,
    Schema,
    error_schema,
    field_names,
    schema,
)
from .values import Missing, Quantity, dec4, plain

COLUMN_TYPES = ("integer", "decimal", "text", "quantity")


@dataclass(frozen=True)
class ColumnSpec:
    """How one CSV column becomes typed cells."""

    name: str
    type: str = "text"
    unit: str | None = None
    unit_from: str | None = None
    sentinels: tuple = ()
    empty: str = "missing"

    def __post_init__(self) -> None:
        if self.type not in COLUMN_TYPES:
            raise ValueError(f"column {self.name!r}: unknown type {self.type!r}")
        if self.unit_from and self.type != "quantity":
            raise ValueError(f"column {self.name!r}: unit_from needs type quantity")
        object.__setattr__(self, "sentinels", tuple(self.sentinels))


def load_sidecar(path: str) -> tuple[ColumnSpec, ...]:
    """Read a table description document: {columns: [{name, type, ...}]}."""
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "columns" not in doc:
        raise ValueError(f"{path}: expected a mapping with a 'columns' list")
    cols = []
    for c in doc["columns"]:
        cols.append(ColumnSpec(
            name=c["name"],
            type=c.get("type", "text"),
            unit=c.get("unit"),
            unit_from=c.get("unit_from"),
            sentinels=tuple(str(s) for s in c.get("sentinels", ())),
            empty=str(c.get("empty", "missing")),
        ))
    names = [c.name for c in cols]
    if len(set(names)) != len(names):
        raise ValueError(f"{path}: duplicate column names")
    by_name = {c.name: c for c in cols}
    for c in cols:
        if c.unit_from:
            ref = by_name.get(c.unit_from)
            if ref is None:
                raise ValueError(f"{path}: {c.name!r} takes units from "
                                 f"unknown column {c.unit_from!r}")
            if ref.type != "text":
                raise ValueError(f"{path}: unit column {c.unit_from!r} must be text")
    return tuple(cols)


def table_schema(cols) -> Schema:
    return schema(*(FieldSpec(c.name, c.type, c.unit) for c in cols))


def _parse_cell(raw: str, col: ColumnSpec):
    """One cell to a value, units resolved later; raises ValueError on junk."""
    if raw == "":
        if col.empty == "missing":
            return Missing("empty")
        if col.empty == "keep":
            if col.type != "text":
                return Missing("empty")
            return ""
        raw = col.empty
    if raw in col.sentinels:
        return Missing(raw)
    if col.type == "text":
        return raw
    if col.type == "integer":
        try:
            return int(raw)
        except ValueError:
            raise ValueError(f"column {col.name!r}: not an integer: {raw!r}")
    # decimal and quantity amounts share the exact-decimal parse
    try:
        return dec4(raw)
    except ValueError:
        raise ValueError(f"column {col.name!r}: not a number: {raw!r}")


def read_table(csv_path: str, cols, first_pid: int = 1, name: str | None = None):
    """Load a CSV into (typed relation, error relation, next free pid).

    Every data row gets a pid whether it parses or not; rows with junk
    cells keep their raw text and move to the error relation instead.
    """
    cols = tuple(cols)
    stage = name or os.path.basename(csv_path)
    sch = table_schema(cols)
    raw_schema = error_schema(schema(*(FieldSpec(c.name, "text") for c in cols)))
    expected = [c.name for c in cols]
    good: list[Record] = []
    bad: list[Record] = []
    pid = first_pid
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if sorted(header) != sorted(expected):
            raise SchemaMismatch(
                f"{csv_path}: header {header} does not match described "
                f"columns {expected}")
        for raw_row in reader:
            problem = None
            fields: dict = {}
            for c in cols:
                try:
                    fields[c.name] = _parse_cell(raw_row[c.name] or "", c)
                except ValueError as exc:
                    problem = str(exc)
                    break
            if problem is None:
                for c in cols:
                    if c.type != "quantity":
                        continue
                    amount = fields[c.name]
                    if isinstance(amount, Missing):
                        continue
                    unit = c.unit
                    if c.unit_from:
                        label = fields[c.unit_from]
                        unit = label if isinstance(label, str) else None
                    if not unit:
                        fields[c.name] = Missing("no unit")
                        continue
                    fields[c.name] = Quantity(amount, unit)
            if problem is None:
                good.append(Record(pids=frozenset({pid}), fields=fields))
            else:
                row = {c.name: raw_row[c.name] or "" for c in cols}
                row[ERROR_STAGE] = stage
                row[ERROR_REASON] = problem
                bad.append(Record(pids=frozenset({pid}), fields=row))
            pid += 1
    return Relation(sch, tuple(good)), Relation(raw_schema, tuple(bad)), pid


# -- emission -----------------------------------------------------------

def render_cell(v) -> str:
    if isinstance(v, Missing):
        return "" if v.reason == "empty" else v.reason
    if isinstance(v, Quantity):
        return f"{plain(v.amount)} {v.unit}"
    if isinstance(v, MonoidElement):
        return v.render()
    if isinstance(v, Decimal):
        return plain(v)
    return str(v)


def write_csv(path: str, rel: Relation) -> None:
    """Emit a relation deterministically; whole-file replace, never partial."""
    if hasattr(rel.schema, "left"):
        raise SchemaMismatch("cannot write a tagged-sum relation to CSV")
    names = list(field_names(rel.schema))
    _atomic_write(path, _csv_text(names, rel))


def _csv_text(names: list, rel: Relation) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for rec in rel.rows:
        w.writerow([render_cell(rec.fields[n]) for n in names])
    return buf.getvalue()


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path: str, text: str) -> None:
    _atomic_write(path, text)
