"""Derived economic series: net new issuance, circulating supply, token velocity."""

from __future__ import annotations

from fractions import Fraction
from itertools import accumulate
from typing import List, Optional

from .model import CohortTables

VELOCITY_WINDOW_DAYS = 30


def net_new(tables: CohortTables) -> List[int]:
    """Per-day created minus spent value; equals that day's block subsidy."""
    return [r.newborn - r.dead for r in tables.stxo]


def circulating_supply(tables: CohortTables) -> List[int]:
    return list(accumulate(net_new(tables)))


def velocity(tables: CohortTables, window: int = VELOCITY_WINDOW_DAYS) -> List[Optional[float]]:
    """Trailing ``window``-day spent value over circulating supply.

    The window is clipped at the first available day.  Days with zero supply
    yield None.  The ratio is formed exactly and rounded once, so scaling every
    amount by a constant leaves the result bit-identical.
    """
    dead = [r.dead for r in tables.stxo]
    trailing = list(accumulate(dead))
    out: List[Optional[float]] = []
    for i, supply in enumerate(circulating_supply(tables)):
        spent = trailing[i] - (trailing[i - window] if i >= window else 0)
        out.append(float(Fraction(spent, supply)) if supply > 0 else None)
    return out
