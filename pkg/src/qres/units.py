"""Fixed-point units used throughout the package.

Money is held as integer micro-dollars and time as integer microseconds,
so every deterministic cost is exact integer arithmetic. Expected values
(probability-weighted sums) are held as `fractions.Fraction`, built from
the exact rational value of each float probability; two different
summation orders of the same terms therefore compare equal with `==`,
which is what the oracle tests rely on.
"""

from __future__ import annotations

from decimal import Decimal, InvalidOperation
from fractions import Fraction

MICRO = 10**6


class UnitError(ValueError):
    """A quantity cannot be represented in the fixed-point grid."""


def _to_micro(value: int | float | str | Decimal, what: str) -> int:
    if isinstance(value, bool):
        raise UnitError(f"{what} must be a number, got a boolean")
    if isinstance(value, int):
        return value * MICRO
    if isinstance(value, float):
        # repr() of a float is its shortest round-tripping decimal; for
        # values on the micro grid this recovers the written literal.
        value = Decimal(repr(value))
    elif isinstance(value, str):
        try:
            value = Decimal(value)
        except InvalidOperation as exc:
            raise UnitError(f"{what} is not a number: {value!r}") from exc
    scaled = value * MICRO
    if scaled != scaled.to_integral_value():
        raise UnitError(f"{what} has sub-micro precision: {value}")
    return int(scaled)


def parse_money(value: int | float | str | Decimal) -> int:
    """Dollars -> integer micro-dollars, rejecting sub-micro precision."""
    return _to_micro(value, "money value")


def parse_seconds(value: int | float | str | Decimal) -> int:
    """Seconds -> integer microseconds, rejecting sub-micro precision."""
    return _to_micro(value, "time value")


def micro_to_unit(micro: int | Fraction) -> float:
    """Micro-units -> float units (correctly rounded)."""
    return float(Fraction(micro) / MICRO)


def format_micro(value: int | Fraction) -> str:
    """Render a micro-unit quantity as a decimal with 6 fraction digits.

    Fractions are rounded to the nearest micro-unit (ties to even) so the
    output is deterministic.
    """
    micro = value if isinstance(value, int) else round(value)
    sign = "-" if micro < 0 else ""
    whole, frac = divmod(abs(micro), MICRO)
    return f"{sign}{whole}.{frac:06d}"


def exact_decimal(value: Fraction | int) -> str:
    """Render an exact finite decimal for a rational with 2^a*5^b denominator.

    Used by the LP writer: every coefficient there is (float probability)
    x (micro-dollar integer) / 10^6, whose denominator is of that form, so
    the printed text loses nothing and parses back to the same Fraction.
    """
    value = Fraction(value)
    num, den = value.numerator, value.denominator
    twos = fives = 0
    rest = den
    while rest % 2 == 0:
        rest //= 2
        twos += 1
    while rest % 5 == 0:
        rest //= 5
        fives += 1
    if rest != 1:
        raise UnitError(f"{value} has no finite decimal expansion")
    digits = max(twos, fives)
    scaled = abs(num) * 10**digits // den
    sign = "-" if num < 0 else ""
    whole, frac = divmod(scaled, 10**digits)
    if digits == 0 or frac == 0:
        return f"{sign}{whole}"
    text = f"{frac:0{digits}d}".rstrip("0")
    return f"{sign}{whole}.{text}"


def fraction_from_decimal(text: str) -> Fraction:
    """Exact inverse of :func:`exact_decimal` (accepts any plain decimal)."""
    try:
        return Fraction(Decimal(text))
    except InvalidOperation as exc:
        raise UnitError(f"not a decimal number: {text!r}") from exc
