"""Daily cohort statistics: created/spent totals, WAL, lifespan and age distributions."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import _exact
from .model import (
    BUCKET_LABELS,
    BUCKET_LOWER_DAYS,
    N_BUCKETS,
    SECONDS_PER_DAY,
    SPENT_SENTINEL,
    CohortTables,
    InputError,
    StxoRow,
    UtxoRow,
    bucket_indices,
)
from .store import DEFAULT_CHUNK_DAYS, PartitionStore, chunk_windows


def _check_range(store: PartitionStore, day: int) -> None:
    if not 0 <= day <= store.last_day:
        raise InputError(f"day {day} outside store range 0..{store.last_day}")


def _total(arr: np.ndarray) -> int:
    if len(arr) == 0:
        return 0
    return int(_exact.group_sums(np.zeros(len(arr), dtype=np.intp), arr["value"], 1)[0])


def newborn_total(store: PartitionStore, day: int) -> int:
    _check_range(store, day)
    return _total(store.birth_array(day))


def dead_total(store: PartitionStore, day: int) -> int:
    _check_range(store, day)
    return _total(store.death_array(day))


def _wal(deaths: np.ndarray) -> Optional[Fraction]:
    dead = _total(deaths)
    if dead == 0:
        return None
    life = deaths["spent"] - deaths["born"]
    num = _exact.weighted_group_sums(np.zeros(len(deaths), dtype=np.intp), deaths["value"], life, 1)[0]
    return Fraction(num, dead)


def wal(store: PartitionStore, day: int) -> Optional[Fraction]:
    """Value-weighted mean lifespan (seconds) of outputs spent on ``day``."""
    _check_range(store, day)
    return _wal(store.death_array(day))


def _lifespan_buckets(deaths: np.ndarray) -> Tuple[int, ...]:
    if len(deaths) == 0:
        return (0,) * N_BUCKETS
    idx = bucket_indices(deaths["spent"] - deaths["born"])
    return tuple(_exact.group_sums(idx, deaths["value"], N_BUCKETS).tolist())


def lifespan_distribution(store: PartitionStore, day: int) -> Dict[int, int]:
    _check_range(store, day)
    return dict(zip(BUCKET_LABELS, _lifespan_buckets(store.death_array(day))))


def stxo_row(store: PartitionStore, day: int) -> StxoRow:
    _check_range(store, day)
    deaths = store.death_array(day)
    return StxoRow(day, _total(store.birth_array(day)), _total(deaths), _wal(deaths),
                   _lifespan_buckets(deaths))


_LOWER = np.array(BUCKET_LOWER_DAYS, dtype=np.int64)


def window_age_buckets(alive: np.ndarray, origin: int, start: int, end: int) -> np.ndarray:
    """Age bucket totals for each day of [start, end] as a (days, 11) integer array.

    ``alive`` must contain every record alive on some day of the window (extra
    records are harmless).  Each record occupies one bucket over a contiguous
    run of days, so its contribution is two entries in a difference array per
    bucket it passes through.
    """
    width = end - start + 1
    if len(alive) == 0:
        return np.zeros((width, N_BUCKETS), dtype=np.int64)
    rel = alive["born"] - origin
    first = rel // SECONDS_PER_DAY
    ceil_days = -(-rel // SECONDS_PER_DAY)
    spent = alive["spent"]
    last = np.where(spent == SPENT_SENTINEL, end,
                    (spent - origin) // SECONDS_PER_DAY - 1)
    lo = np.maximum(first, start)
    hi = np.minimum(last, end)
    keep = lo <= hi
    lo, hi, ceil_days = lo[keep], hi[keep], ceil_days[keep]
    values = alive["value"][keep]
    plus: List[np.ndarray] = []
    minus: List[np.ndarray] = []
    pv: List[np.ndarray] = []
    mv: List[np.ndarray] = []
    for k in range(N_BUCKETS):
        b_start = np.maximum(lo, _LOWER[k] + ceil_days - 1)
        if k + 1 < N_BUCKETS:
            b_end = np.minimum(hi, _LOWER[k + 1] + ceil_days - 2)
        else:
            b_end = hi
        ok = b_start <= b_end
        if not ok.any():
            continue
        plus.append((b_start[ok] - start) * N_BUCKETS + k)
        pv.append(values[ok])
        closes = ok & (b_end < end)
        minus.append((b_end[closes] + 1 - start) * N_BUCKETS + k)
        mv.append(values[closes])
    size = width * N_BUCKETS
    diff = _exact.group_sums(np.concatenate(plus), np.concatenate(pv), size) if plus else np.zeros(size, np.int64)
    if minus and sum(len(m) for m in minus):
        diff = diff - _exact.group_sums(np.concatenate(minus), np.concatenate(mv), size)
    return np.cumsum(diff.reshape(width, N_BUCKETS), axis=0)


def age_distribution(store: PartitionStore, day: int) -> Dict[int, int]:
    """Value per age bucket over outputs alive at the end of ``day``."""
    _check_range(store, day)
    alive = store.scan_alive_window(day, day)
    row = window_age_buckets(alive, store._origin, day, day)[0]
    return dict(zip(BUCKET_LABELS, row.tolist()))


def build_tables(store: PartitionStore, first: int = 0, last: Optional[int] = None,
                 chunk_days: int = DEFAULT_CHUNK_DAYS, jobs: int = 1) -> CohortTables:
    """STXO and UTXO rows for every day in [first, last].

    Age distributions are computed window by window; the result does not
    depend on ``chunk_days`` or ``jobs``.
    """
    last = store.last_day if last is None else last
    tables = CohortTables(store.genesis)
    if last < first and store.last_day < 0:
        return tables
    if first > last:
        raise InputError(f"empty range [{first}, {last}]")
    _check_range(store, first)
    _check_range(store, last)
    windows = chunk_windows(first, last, chunk_days)
    origin = store._origin
    days = range(first, last + 1)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            stxo = list(pool.map(lambda d: stxo_row(store, d), days))
            blocks = list(pool.map(
                lambda w: window_age_buckets(store.scan_alive_window(*w), origin, *w), windows))
    else:
        stxo = [stxo_row(store, d) for d in days]
        blocks = [window_age_buckets(alive, origin, s, e)
                  for alive, (s, e) in zip(store.iter_alive_windows(windows), windows)]
    ages = np.concatenate(blocks)
    tables.stxo = stxo
    tables.utxo = [UtxoRow(d, tuple(row)) for d, row in zip(days, ages.tolist())]
    return tables
