"""Consistency checks over built tables, reported as JSON-ready dicts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from .model import CohortTables, btc_from_satoshi
from .series import circulating_supply, net_new


@dataclass
class Report:
    check: str
    status: str
    first_failure: Optional[Dict[str, Any]] = None
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "PASS"

    def to_json(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"check": self.check, "status": self.status,
                               "first_failure": self.first_failure}
        if self.details:
            out["details"] = self.details
        return out

    def text(self) -> str:
        line = f"{self.check}: {self.status}"
        if self.first_failure:
            f = self.first_failure
            line += f" at {f['date']} (expected {f['expected']}, actual {f['actual']})"
        return line


def _failure(tables: CohortTables, day: int, expected: Any, actual: Any) -> Dict[str, Any]:
    return {"date": tables.date(day).isoformat(), "expected": expected, "actual": actual}


def check_supply_consistency(tables: CohortTables) -> Report:
    """Age-bucket totals must equal cumulative net new value on every day."""
    for row, supply in zip(tables.utxo, circulating_supply(tables)):
        total = row.total
        if total != supply:
            return Report("supply_consistency", "FAIL", _failure(tables, row.date, supply, total),
                          {"delta_satoshi": total - supply})
    return Report("supply_consistency", "PASS")


def subsidy(height: int, initial: int, interval: int) -> int:
    """Block subsidy in satoshi; halves by right shift every ``interval`` blocks."""
    halvings = height // interval
    return initial >> halvings if halvings < 64 else 0


def expected_daily_subsidy(day: int, initial: int, interval: int, blocks_per_day: int) -> int:
    first = day * blocks_per_day
    total = 0
    h = first
    end = first + blocks_per_day
    while h < end:  # sum runs of constant subsidy
        run_end = min(end, (h // interval + 1) * interval)
        total += (run_end - h) * subsidy(h, initial, interval)
        h = run_end
    return total


def check_halving(tables: CohortTables, initial: int, interval: int, blocks_per_day: int,
                  tolerance: Optional[int] = None) -> Report:
    """Daily net new value must track the subsidy schedule.

    By default a day may deviate by one block's subsidy, which absorbs irregular
    block timing around midnight on real chains.  ``tolerance=0`` demands an
    exact match, appropriate for generated chains with fixed block spacing.
    """
    for row, got in zip(tables.stxo, net_new(tables)):
        want = expected_daily_subsidy(row.date, initial, interval, blocks_per_day)
        slack = subsidy(row.date * blocks_per_day, initial, interval) if tolerance is None else tolerance
        if abs(got - want) > slack:
            return Report("halving", "FAIL",
                          _failure(tables, row.date, btc_from_satoshi(want), btc_from_satoshi(got)))
    return Report("halving", "PASS", details={
        "initial_subsidy": btc_from_satoshi(initial),
        "halving_interval_blocks": interval,
        "blocks_per_day": blocks_per_day,
    })


def check_continuity(tables: CohortTables) -> Report:
    """Both tables cover the same contiguous day range, each day once."""
    stxo_days = [r.date for r in tables.stxo]
    utxo_days = [r.date for r in tables.utxo]
    for name, days in (("stxo", stxo_days), ("utxo", utxo_days)):
        for prev, cur in zip(days, days[1:]):
            if cur != prev + 1:
                missing = prev + 1 if cur > prev + 1 else cur
                return Report("continuity", "FAIL",
                              _failure(tables, missing, tables.date(prev + 1).isoformat(),
                                       tables.date(cur).isoformat()),
                              {"table": name})
    if stxo_days != utxo_days:
        span = lambda ds: f"{tables.date(ds[0])}..{tables.date(ds[-1])}" if ds else "empty"  # noqa: E731
        first = stxo_days[0] if stxo_days else utxo_days[0]
        return Report("continuity", "FAIL", _failure(tables, first, span(stxo_days), span(utxo_days)),
                      {"table": "stxo vs utxo"})
    return Report("continuity", "PASS")


def run_all(tables: CohortTables, halving: Optional[tuple] = None,
            tolerance: Optional[int] = None) -> List[Report]:
    reports = [check_continuity(tables), check_supply_consistency(tables)]
    if halving is not None:
        reports.append(check_halving(tables, *halving, tolerance=tolerance))
    return reports
