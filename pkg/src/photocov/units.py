"""
Unit-aware parsing of scenario quantities.

Values may be given as bare numbers, which are taken to be in SI base units
(metres, seconds), or as strings with units, eg, :code:`"50 cm"`, :code:`"0.05 s"`,
:code:`"1 / s"` or :code:`"1e-4 m/s"`.  Everything is returned as a plain float in SI units.
"""

from __future__ import annotations

from typing import Union

import pint
from pint import Quantity
from typing_extensions import TypeAlias

__all__ = [
    "ureg",
    "Q_",
    "QuantityLike",
    "parse_length",
    "parse_time",
    "parse_rate",
    "parse_speed",
]

ureg = pint.UnitRegistry()
ureg.default_format = "~P"

QuantityLike: TypeAlias = Union[float, int, str, Quantity]


def Q_(qty: float | int | str, unit: str | pint.Unit | None = None) -> Quantity:
    "Convenient constructor for quantities, eg, :code:`Q_(0.5, 'm')`."
    if unit is not None:
        return ureg.Quantity(float(qty), unit)
    return ureg.Quantity(qty)


def _parse_quantity(v: QuantityLike, unit: str, what: str) -> float:
    """Parses a number, string or Quantity, returning its magnitude in `unit`.

    Bare numbers, and strings without units, are taken to already be in `unit`.
    """
    if isinstance(v, bool):
        raise ValueError(f"{v!r} is not a valid quantity here (should be {what}).")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            q = ureg.Quantity(v)
        except (pint.errors.PintError, AttributeError, TypeError, ValueError) as err:
            raise ValueError(f"{v!r} is not a valid quantity here (should be {what}).") from err
    elif isinstance(v, Quantity):
        q = v
    else:
        raise ValueError(f"{v!r} is not a valid quantity here (should be {what}).")

    if not isinstance(q, Quantity) or q.dimensionless:
        return float(getattr(q, "m", q))
    if not q.is_compatible_with(unit):
        raise ValueError(f"{v} is not a valid quantity here (should be {what}).")
    return float(q.m_as(unit))


def parse_length(v: QuantityLike) -> float:
    "Parses a length, returning metres."
    return _parse_quantity(v, "m", "length")


def parse_time(v: QuantityLike) -> float:
    "Parses a duration, returning seconds."
    return _parse_quantity(v, "s", "time")


def parse_rate(v: QuantityLike) -> float:
    "Parses a rate (eg, a controller gain), returning 1/s."
    return _parse_quantity(v, "1/s", "rate")


def parse_speed(v: QuantityLike) -> float:
    "Parses a speed, returning m/s."
    return _parse_quantity(v, "m/s", "speed")
