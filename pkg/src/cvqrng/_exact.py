"""Directed rounding between exact rationals and binary64 floats."""

from __future__ import annotations

import math
from fractions import Fraction


def exact(x: float | int | Fraction) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def float_up(q: Fraction) -> float:
    """Smallest float that is >= q."""
    f = float(q)
    if Fraction(f) < q:
        f = math.nextafter(f, math.inf)
    return f


def float_down(q: Fraction) -> float:
    """Largest float that is <= q."""
    f = float(q)
    if Fraction(f) > q:
        f = math.nextafter(f, -math.inf)
    return f
