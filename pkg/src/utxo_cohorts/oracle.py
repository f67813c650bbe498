"""Brute-force reference tables.

Applies the daily definitions literally with a full scan of every record for
every day.  Deliberately self-contained: it keeps its own bucket table and
day arithmetic and imports nothing from the engine or the store, so the two
paths can check each other.
"""

from __future__ import annotations

import datetime as dt
from fractions import Fraction
from typing import Iterable, List, Optional, Union

import numpy as np

from .model import CohortTables, OutputRecord, StxoRow, UtxoRow

DAY = 24 * 60 * 60
# (label, lower days, upper days); upper None means unbounded.
_BUCKETS = [
    (-9, 0, 1), (-7, 1, 30), (-5, 30, 90), (-3, 90, 180), (-1, 180, 365),
    (1, 365, 730), (3, 730, 1095), (5, 1095, 1460), (7, 1460, 1825),
    (9, 1825, 3650), (11, 3650, None),
]
_NO_SPEND = np.iinfo(np.int64).max


def _columns(records: Union[np.ndarray, Iterable[OutputRecord]]):
    if isinstance(records, np.ndarray):
        return (records["value"].astype(np.uint64), records["born"].astype(np.int64),
                records["spent"].astype(np.int64))
    recs = list(records)
    value = np.array([r.value for r in recs], dtype=np.uint64)
    born = np.array([r.born for r in recs], dtype=np.int64)
    spent = np.array([_NO_SPEND if r.spent is None else r.spent for r in recs], dtype=np.int64)
    return value, born, spent


def _sum(values: np.ndarray) -> int:
    if len(values) == 0:
        return 0
    if int(values.max()) * len(values) < 1 << 63:
        return int(values.sum(dtype=np.uint64))
    return sum(values.tolist())


def _bucket_sums(durations: np.ndarray, values: np.ndarray) -> tuple:
    sums = []
    for _, lo, hi in _BUCKETS:
        inside = durations >= lo * DAY
        if hi is not None:
            inside &= durations < hi * DAY
        sums.append(_sum(values[inside]))
    return tuple(sums)


def oracle_tables(records: Union[np.ndarray, Iterable[OutputRecord]], genesis: dt.date,
                  first: int, last: int) -> CohortTables:
    value, born, spent = _columns(records)
    origin = int(dt.datetime.combine(genesis, dt.time(), tzinfo=dt.timezone.utc).timestamp())
    tables = CohortTables(genesis)
    for day in range(first, last + 1):
        start = origin + day * DAY
        end = start + DAY
        births = (born >= start) & (born < end)
        deaths = (spent >= start) & (spent < end)
        dead_values = value[deaths]
        lifespans = spent[deaths] - born[deaths]
        dead = _sum(dead_values)
        wal: Optional[Fraction] = None
        if dead:
            weighted = sum(int(v) * int(l) for v, l in zip(dead_values.tolist(), lifespans.tolist()))
            wal = Fraction(weighted, dead)
        tables.stxo.append(StxoRow(day, _sum(value[births]), dead, wal,
                                   _bucket_sums(lifespans, dead_values)))
        alive = (born < end) & ((spent == _NO_SPEND) | (spent >= end))
        tables.utxo.append(UtxoRow(day, _bucket_sums(end - born[alive], value[alive])))
    return tables


def oracle_day_histogram(records: np.ndarray, genesis: dt.date, days: int, column: str) -> List[int]:
    """Per-day record counts keyed on ``born`` or ``spent``."""
    origin = int(dt.datetime.combine(genesis, dt.time(), tzinfo=dt.timezone.utc).timestamp())
    ts = records[column].astype(np.int64)
    return [int(((ts >= origin + d * DAY) & (ts < origin + (d + 1) * DAY)).sum()) for d in range(days)]
