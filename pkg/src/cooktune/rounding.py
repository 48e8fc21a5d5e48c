"""Half-up decimal rendering shared by stats and evaluation reports.

All user-facing percentages and scores in this package round half-up at
a fixed number of decimals, computed in exact decimal arithmetic so the
rendered string never depends on binary float artifacts.
"""

from __future__ import annotations

from decimal import Decimal, ROUND_HALF_UP
from fractions import Fraction


def round_ratio_percent(numerator: int, denominator: int, decimals: int) -> Decimal:
    """Render 100 * numerator / denominator, half-up at ``decimals``."""
    quantum = Decimal(1).scaleb(-decimals)
    exact = Decimal(100 * numerator) / Decimal(denominator)
    return exact.quantize(quantum, rounding=ROUND_HALF_UP)

def round_value(value: float | Fraction, decimals: int) -> Decimal:
    """Round a value half-up at ``decimals``, via its decimal form."""
    quantum = Decimal(1).scaleb(-decimals)
    if isinstance(value, Fraction):
        exact = Decimal(value.numerator) / Decimal(value.denominator)
    else:
        exact = Decimal(repr(value))
    return exact.quantize(quantum, rounding=ROUND_HALF_UP)
