"""Field values: exact decimals, unit-tagged quantities, typed missingness.

All numerics are Decimal quantized to four places; nothing in the package
ever goes through binary floating point, so equality checks are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

DEC4 = Decimal("0.0001")

# Sentinels for unbounded min/max folds; Decimal handles them exactly.
POS_INF = Decimal("Infinity")
NEG_INF = Decimal("-Infinity")


def dec4(value: int | str | Decimal) -> Decimal:
    """Parse/convert to a Decimal quantized to four fractional digits."""
    try:
        d = value if isinstance(value, Decimal) else Decimal(value)
        return d.quantize(DEC4)
    except (InvalidOperation, ValueError) as exc:
        raise ValueError(f"not a decimal: {value!r}") from exc


@dataclass(frozen=True)
class Quantity:
    """An amount bound to a unit label, e.g. 200 tonne.

    Amounts of different units never compare or combine; aggregation
    subdivides by unit instead of mixing them.
    """

    amount: Decimal
    unit: str

    def __post_init__(self) -> None:
        if not isinstance(self.amount, Decimal):
            raise TypeError("Quantity.amount must be a Decimal")
        if not self.unit:
            raise ValueError("Quantity.unit must be a nonempty label")

    def __str__(self) -> str:
        return f"{plain(self.amount)} {self.unit}"


@dataclass(frozen=True)
class Missing:
    """A typed hole: the value is absent and `reason` says why.

    Two Missing cells are interchangeable for row identity no matter the
    reason (see cell_key); the reason still travels for error reporting.
    """

    reason: str

    def __post_init__(self) -> None:
        if not self.reason:
            raise ValueError("Missing.reason must be nonempty")

    def __str__(self) -> str:
        return f"<missing: {self.reason}>"


# A relation cell.  Summary relations additionally hold MonoidElement cells;
# those register themselves via a _cell_key method rather than an import here.
FieldValue = int | str | Decimal | Quantity | Missing


def plain(d: Decimal) -> str:
    """Canonical text for a Decimal: trailing zeros dropped, -0 folded to 0."""
    if d.is_infinite():
        return "inf" if d > 0 else "-inf"
    text = format(d + Decimal(0), "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text


def cell_key(value: object) -> object:
    """Hashable canonical identity of a cell value.

    Missing cells collapse to one key regardless of reason; Decimals with
    different scales (4 vs 4.0000) collapse to one key.  Used for duplicate
    detection, multiset comparison and set-valued aggregation.
    """
    if isinstance(value, Missing):
        return ("missing",)
    if isinstance(value, Quantity):
        return ("qty", plain(value.amount), value.unit)
    if isinstance(value, Decimal):
        return ("dec", plain(value))
    if isinstance(value, bool):  # bool before int: bool is an int subtype
        return ("bool", value)
    if isinstance(value, int):
        return ("int", value)
    if isinstance(value, str):
        return ("str", value)
    key_fn = getattr(value, "_cell_key", None)
    if key_fn is not None:
        return key_fn()
    raise TypeError(f"not a field value: {value!r}")
