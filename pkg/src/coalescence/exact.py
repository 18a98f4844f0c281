"""Helpers for mixing exact rationals and floats.

Parameters given as ``int``, ``Fraction`` or a rational string stay exact;
floats stay floats. Every closed-form path in the package keeps values in
``Fraction`` when all inputs are exact.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Union

Number = Union[Fraction, float]


def as_number(x) -> Number:
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        return x
    try:
        return float(x)
    except (TypeError, ValueError):
        raise TypeError(f"not a number: {x!r}") from None


def from_literal(x) -> Number:
    """Parse a config/JSON literal; decimal float literals become exact rationals."""
    if isinstance(x, float):
        if not math.isfinite(x):
            return x
        return Fraction(repr(x))
    return as_number(x)


def is_exact(*xs) -> bool:
    return all(isinstance(x, (Fraction, int)) and not isinstance(x, bool) for x in xs)


def to_literal(x):
    """JSON-friendly form: plain number when it round-trips, else "p/q"."""
    if isinstance(x, Fraction):
        if x.denominator == 1:
            return int(x)
        f = float(x)
        if Fraction(repr(f)) == x:
            return f
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, int):
        return x
    return float(x)


def exact_str(x) -> str:
    """Rational string for exact values, empty for floats."""
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, int) and not isinstance(x, bool):
        return str(x)
    return ""


def log_of(x) -> float:
    """Natural log that survives huge or tiny Fractions (no float under/overflow)."""
    if isinstance(x, Fraction):
        if x <= 0:
            raise ValueError("log of non-positive value")
        return math.log(x.numerator) - math.log(x.denominator)
    return math.log(x)
