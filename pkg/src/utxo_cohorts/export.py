"""CSV exports of the daily tables, exact JSON persistence, and CSV diffing."""

from __future__ import annotations

import csv
import json
import os
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence

from .model import (
    BUCKET_LABELS,
    N_BUCKETS,
    SECONDS_PER_DAY,
    CohortTables,
    InputError,
    StxoRow,
    UtxoRow,
    btc_from_satoshi,
    parse_date,
    satoshi_from_btc,
)
from .series import circulating_supply, net_new, velocity

STXO_HEADER = ["date", "newborn", "dead", "WAL"] + [str(b) for b in BUCKET_LABELS]
UTXO_HEADER = ["date"] + [str(b) for b in BUCKET_LABELS]
SERIES_HEADER = ["date", "newborn", "dead", "net_new", "supply", "velocity"]
DATE_FORMAT = "%Y/%m/%d"
WAL_PLACES = 6


def format_wal_days(wal_seconds: Optional[Fraction]) -> str:
    if wal_seconds is None:
        return ""
    scaled = round(Fraction(wal_seconds) * 10 ** WAL_PLACES / SECONDS_PER_DAY)
    whole, frac = divmod(scaled, 10 ** WAL_PLACES)
    return f"{whole}.{frac:0{WAL_PLACES}d}"


def parse_wal_days(text: str) -> Optional[Fraction]:
    if not text.strip():
        return None
    try:
        return Fraction(Decimal(text.strip())) * SECONDS_PER_DAY
    except InvalidOperation as exc:
        raise InputError(f"bad WAL value {text!r}") from exc


def result_filename(chain: str, kind: str, tables: CohortTables) -> str:
    """``<chain>ResultSTXO<end-date>.csv`` style names."""
    end = tables.date(tables.stxo[-1].date).isoformat() if tables.stxo else "empty"
    tag = {"stxo": "STXO", "utxo": "UTXO", "series": "Series"}[kind]
    return f"{chain}Result{tag}{end}.csv"


def _write_rows(path: str, header: Sequence[str], rows: List[List[str]]) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def stxo_rows(tables: CohortTables) -> List[List[str]]:
    return [[tables.date(r.date).strftime(DATE_FORMAT), btc_from_satoshi(r.newborn),
             btc_from_satoshi(r.dead), format_wal_days(r.wal_seconds)]
            + [btc_from_satoshi(v) for v in r.lifespan_buckets] for r in tables.stxo]


def utxo_rows(tables: CohortTables) -> List[List[str]]:
    return [[tables.date(r.date).strftime(DATE_FORMAT)] + [btc_from_satoshi(v) for v in r.age_buckets]
            for r in tables.utxo]


def series_rows(tables: CohortTables) -> List[List[str]]:
    rows = []
    for r, nn, supply, v in zip(tables.stxo, net_new(tables), circulating_supply(tables), velocity(tables)):
        rows.append([tables.date(r.date).strftime(DATE_FORMAT), btc_from_satoshi(r.newborn),
                     btc_from_satoshi(r.dead), btc_from_satoshi(nn), btc_from_satoshi(supply),
                     "" if v is None else f"{v:.12f}"])
    return rows


def export_stxo_csv(tables: CohortTables, path: str) -> None:
    _write_rows(path, STXO_HEADER, stxo_rows(tables))


def export_utxo_csv(tables: CohortTables, path: str) -> None:
    _write_rows(path, UTXO_HEADER, utxo_rows(tables))


def export_series_csv(tables: CohortTables, path: str) -> None:
    _write_rows(path, SERIES_HEADER, series_rows(tables))


EXPORTERS = {"stxo": export_stxo_csv, "utxo": export_utxo_csv, "series": export_series_csv}


# --- re-import -------------------------------------------------------------------------

def _read_csv(path: str, header: Sequence[str]) -> List[List[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != list(header):
        raise InputError(f"{path}: unexpected header {rows[0] if rows else None}")
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InputError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
    return rows[1:]


def import_tables(stxo_path: str, utxo_path: str, genesis) -> CohortTables:
    """Rebuild tables from exported STXO/UTXO CSVs (WAL keeps its exported precision)."""
    tables = CohortTables(genesis)

    def day(text: str) -> int:
        return (parse_date(text) - genesis).days

    for row in _read_csv(stxo_path, STXO_HEADER):
        tables.stxo.append(StxoRow(day(row[0]), satoshi_from_btc(row[1]), satoshi_from_btc(row[2]),
                                   parse_wal_days(row[3]),
                                   tuple(satoshi_from_btc(x) for x in row[4:])))
    for row in _read_csv(utxo_path, UTXO_HEADER):
        tables.utxo.append(UtxoRow(day(row[0]), tuple(satoshi_from_btc(x) for x in row[1:])))
    return tables


# --- exact persistence -----------------------------------------------------------------

def tables_to_json(tables: CohortTables) -> Dict[str, Any]:
    def wal(r: StxoRow) -> Optional[List[int]]:
        if r.wal_seconds is None:
            return None
        return [r.wal_seconds.numerator, r.wal_seconds.denominator]

    return {
        "genesis": tables.genesis.isoformat(),
        "buckets": list(BUCKET_LABELS),
        "stxo": [[r.date, r.newborn, r.dead, wal(r), list(r.lifespan_buckets)] for r in tables.stxo],
        "utxo": [[r.date, list(r.age_buckets)] for r in tables.utxo],
    }


def tables_from_json(data: Dict[str, Any]) -> CohortTables:
    if data.get("buckets") != list(BUCKET_LABELS):
        raise InputError("tables file uses a different bucket taxonomy")
    tables = CohortTables(parse_date(data["genesis"]))
    for d, nb, dead, wal, buckets in data["stxo"]:
        if len(buckets) != N_BUCKETS:
            raise InputError(f"day {d}: expected {N_BUCKETS} buckets")
        tables.stxo.append(StxoRow(d, nb, dead, None if wal is None else Fraction(*wal), tuple(buckets)))
    for d, buckets in data["utxo"]:
        tables.utxo.append(UtxoRow(d, tuple(buckets)))
    return tables


def save_tables(tables: CohortTables, path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(tables_to_json(tables), fh, separators=(",", ":"))
        fh.write("\n")


def load_tables(path: str) -> CohortTables:
    try:
        with open(path, encoding="utf-8") as fh:
            return tables_from_json(json.load(fh))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"{path}: not a tables file ({exc})") from exc


# --- diff ---------------------------------------------------------------------------------

def diff_csv(path_a: str, path_b: str, tolerance: Decimal = Decimal(0)) -> Optional[Dict[str, Any]]:
    """First differing cell between two CSV files, or None when they agree.

    With a positive ``tolerance`` numeric cells may differ by at most that much.
    """
    with open(path_a, newline="", encoding="utf-8") as fa, open(path_b, newline="", encoding="utf-8") as fb:
        rows_a = list(csv.reader(fa))
        rows_b = list(csv.reader(fb))
    header = rows_a[0] if rows_a else []
    for i, (ra, rb) in enumerate(zip(rows_a, rows_b)):
        for j in range(max(len(ra), len(rb))):
            a = ra[j] if j < len(ra) else None
            b = rb[j] if j < len(rb) else None
            if a == b:
                continue
            if tolerance > 0 and a and b:
                try:
                    if abs(Decimal(a) - Decimal(b)) <= tolerance:
                        continue
                except InvalidOperation:
                    pass
            column = header[j] if j < len(header) else str(j)
            return {"line": i + 1, "column": column, "a": a, "b": b}
    if len(rows_a) != len(rows_b):
        n = min(len(rows_a), len(rows_b))
        return {"line": n + 1, "column": None,
                "a": "<row>" if len(rows_a) > n else "<end of file>",
                "b": "<row>" if len(rows_b) > n else "<end of file>"}
    return None
