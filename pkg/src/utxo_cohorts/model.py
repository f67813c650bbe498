"""Domain types, time and amount arithmetic, and the duration bucket taxonomy."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

SATOSHI_PER_BTC = 100_000_000
SECONDS_PER_DAY = 86_400

# Absent spend timestamp in on-disk segments.
SPENT_SENTINEL = np.iinfo(np.int64).max

RECORD_DTYPE = np.dtype([("value", "<u8"), ("born", "<i8"), ("spent", "<i8")])

BUCKET_LABELS: Tuple[int, ...] = (-9, -7, -5, -3, -1, 1, 3, 5, 7, 9, 11)
# Lower bounds in days; each bucket covers [lower, next lower).
BUCKET_LOWER_DAYS: Tuple[int, ...] = (0, 1, 30, 90, 180, 365, 730, 1095, 1460, 1825, 3650)
BUCKET_BOUNDS_SECONDS = np.array(BUCKET_LOWER_DAYS, dtype=np.int64) * SECONDS_PER_DAY
N_BUCKETS = len(BUCKET_LABELS)
BUCKET_NAMES: Tuple[str, ...] = ("<1d", "1d~1m", "1m~1q", "1q~6m", "6m~1y", "1y~2y",
                                 "2y~3y", "3y~4y", "4y~5y", "5y~10y", ">10y")

BITCOIN_GENESIS = dt.date(2009, 1, 3)


class CohortError(Exception):
    """Base class for all errors raised by this package."""


class InputError(CohortError, ValueError):
    """Rejected input: bad argument, malformed value or out-of-range day."""


class SchemaError(InputError):
    pass


class IntegrityError(CohortError):
    """Data violates a chain invariant (double spend, spend before birth, bad checksum)."""


class SequencingError(CohortError):
    pass


# --- amounts -----------------------------------------------------------------

def btc_from_satoshi(v: int) -> str:
    """Render a satoshi amount as a BTC decimal string with 8 fractional digits."""
    v = int(v)
    sign = "-" if v < 0 else ""
    whole, frac = divmod(abs(v), SATOSHI_PER_BTC)
    return f"{sign}{whole}.{frac:08d}"


def satoshi_from_btc(text: str) -> int:
    """Inverse of :func:`btc_from_satoshi`; rejects more than 8 fractional digits."""
    s = text.strip()
    neg = s.startswith("-")
    if neg or s.startswith("+"):
        s = s[1:]
    whole, _, frac = s.partition(".")
    if not whole.isdigit() and not (whole == "" and frac):
        raise InputError(f"not a BTC amount: {text!r}")
    if frac and (not frac.isdigit() or len(frac) > 8):
        raise InputError(f"not a BTC amount: {text!r}")
    sat = int(whole or "0") * SATOSHI_PER_BTC + int(frac.ljust(8, "0") or "0")
    return -sat if neg else sat


# --- time ----------------------------------------------------------------------

def midnight_epoch(day: dt.date) -> int:
    return int(dt.datetime(day.year, day.month, day.day, tzinfo=dt.timezone.utc).timestamp())


def day_index(t: int, genesis: dt.date) -> int:
    """Days since the genesis date (UTC); a timestamp at exactly midnight starts the next day."""
    offset = int(t) - midnight_epoch(genesis)
    if offset < 0:
        raise InputError(f"timestamp {t} precedes genesis {genesis.isoformat()}")
    return offset // SECONDS_PER_DAY


def date_of(day: int, genesis: dt.date) -> dt.date:
    return genesis + dt.timedelta(days=int(day))


def end_of_day(day: int, genesis: dt.date) -> int:
    """Epoch second of the midnight that closes ``day`` (exclusive bound)."""
    return midnight_epoch(genesis) + (int(day) + 1) * SECONDS_PER_DAY


def parse_date(text: str) -> dt.date:
    """Accept YYYY-MM-DD or YYYY/MM/DD."""
    try:
        return dt.date.fromisoformat(text.strip().replace("/", "-"))
    except ValueError as exc:
        raise InputError(f"bad date {text!r}") from exc


def format_timestamp(t: int) -> str:
    return dt.datetime.fromtimestamp(int(t), tz=dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> int:
    """Parse ISO-8601 (naive means UTC) or integer epoch seconds."""
    s = text.strip()
    if not s:
        raise InputError("empty timestamp")
    if s.lstrip("-").isdigit():
        return int(s)
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        ts = dt.datetime.fromisoformat(s)
    except ValueError as exc:
        raise InputError(f"bad timestamp {text!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=dt.timezone.utc)
    return int(ts.timestamp() // 1)


# --- buckets -------------------------------------------------------------------

def classify_duration(d: int, bounds: Sequence[int] = BUCKET_BOUNDS_SECONDS) -> int:
    """Return the bucket label whose [lower, upper) interval contains ``d`` seconds."""
    d = int(d)
    if d < 0:
        raise InputError(f"negative duration {d}")
    idx = int(np.searchsorted(np.asarray(bounds), d, side="right")) - 1
    return BUCKET_LABELS[idx]


def bucket_indices(durations: np.ndarray) -> np.ndarray:
    """Vectorised bucket position (0..10) for non-negative durations in seconds."""
    return np.searchsorted(BUCKET_BOUNDS_SECONDS, durations, side="right") - 1


# --- records and rows ------------------------------------------------------------

@dataclass(frozen=True)
class OutputRecord:
    value: int
    born: int
    spent: Optional[int] = None

    def __post_init__(self) -> None:
        if self.value < 0:
            raise InputError(f"negative value {self.value}")
        if self.spent is not None and self.spent < self.born:
            raise IntegrityError(f"spent {self.spent} before born {self.born}")

    @property
    def lifespan(self) -> Optional[int]:
        return None if self.spent is None else self.spent - self.born


def records_to_array(records: Iterable[OutputRecord]) -> np.ndarray:
    rows = [(r.value, r.born, SPENT_SENTINEL if r.spent is None else r.spent) for r in records]
    return np.array(rows, dtype=RECORD_DTYPE)


def array_to_records(arr: np.ndarray) -> Iterator[OutputRecord]:
    for value, born, spent in arr.tolist():
        yield OutputRecord(value, born, None if spent == SPENT_SENTINEL else spent)


def _zero_buckets() -> Tuple[int, ...]:
    return (0,) * N_BUCKETS


@dataclass(frozen=True)
class StxoRow:
    date: int
    newborn: int
    dead: int
    wal_seconds: Optional[Fraction]
    lifespan_buckets: Tuple[int, ...] = field(default_factory=_zero_buckets)

    @property
    def buckets(self) -> Dict[int, int]:
        return dict(zip(BUCKET_LABELS, self.lifespan_buckets))


@dataclass(frozen=True)
class UtxoRow:
    date: int
    age_buckets: Tuple[int, ...] = field(default_factory=_zero_buckets)

    @property
    def buckets(self) -> Dict[int, int]:
        return dict(zip(BUCKET_LABELS, self.age_buckets))

    @property
    def total(self) -> int:
        return sum(self.age_buckets)


@dataclass
class CohortTables:
    """Daily STXO and UTXO rows for one chain; ``date`` fields are day indices."""

    genesis: dt.date
    stxo: List[StxoRow] = field(default_factory=list)
    utxo: List[UtxoRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.stxo)

    @property
    def days(self) -> List[int]:
        return [r.date for r in self.stxo]

    def date(self, day: int) -> dt.date:
        return date_of(day, self.genesis)

    def first_difference(self, other: "CohortTables") -> Optional[str]:
        """Describe the first row where two table sets disagree, or None."""
        if self.genesis != other.genesis:
            return f"genesis {self.genesis} != {other.genesis}"
        for name in ("stxo", "utxo"):
            mine, theirs = getattr(self, name), getattr(other, name)
            if len(mine) != len(theirs):
                return f"{name}: {len(mine)} rows != {len(theirs)} rows"
            for a, b in zip(mine, theirs):
                if a != b:
                    return f"{name} day {a.date}: {a} != {b}"
        return None
