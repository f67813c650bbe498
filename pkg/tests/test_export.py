from __future__ import annotations

import csv
import datetime as dt
from decimal import Decimal
from fractions import Fraction

import pytest

from utxo_cohorts.engine import build_tables
from utxo_cohorts.export import (
    SERIES_HEADER,
    diff_csv,
    export_series_csv,
    export_stxo_csv,
    export_utxo_csv,
    format_wal_days,
    import_tables,
    load_tables,
    parse_wal_days,
    result_filename,
    save_tables,
)
from utxo_cohorts.model import CohortTables, InputError, StxoRow, UtxoRow, satoshi_from_btc

from .conftest import DAY, GENESIS


@pytest.fixture(scope="module")
def tables(small_store):
    return build_tables(small_store)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_headers_exact(tables, tmp_path):
    export_stxo_csv(tables, str(tmp_path / "s.csv"))
    export_utxo_csv(tables, str(tmp_path / "u.csv"))
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "date,newborn,dead,WAL,-9,-7,-5,-3,-1,1,3,5,7,9,11"
    assert (tmp_path / "u.csv").read_text().splitlines()[0] == "date,-9,-7,-5,-3,-1,1,3,5,7,9,11"
    s, u = rows(tmp_path / "s.csv"), rows(tmp_path / "u.csv")
    assert {len(r) for r in s} == {15} and {len(r) for r in u} == {12}
    dates = [dt.datetime.strptime(r[0], "%Y/%m/%d").date() for r in s[1:]]
    assert dates == [GENESIS + dt.timedelta(days=i) for i in range(len(tables))]
    assert [r[0] for r in u[1:]] == [r[0] for r in s[1:]]


def test_empty_day_row(tmp_path):
    day = (dt.date(2009, 5, 1) - GENESIS).days
    t = CohortTables(GENESIS, [StxoRow(day, 0, 0, None)], [UtxoRow(day)])
    export_stxo_csv(t, str(tmp_path / "s.csv"))
    line = (tmp_path / "s.csv").read_text().splitlines()[1]
    assert line == "2009/05/01,0.00000000,0.00000000,," + ",".join(["0.00000000"] * 11)


def test_wal_days_format():
    assert format_wal_days(None) == ""
    assert format_wal_days(Fraction(4 * DAY)) == "4.000000"
    assert format_wal_days(Fraction(DAY, 3)) == "0.333333"
    assert format_wal_days(Fraction(1, 2_000_000) * DAY) == "0.000000"   # half-even
    assert format_wal_days(Fraction(3, 2_000_000) * DAY) == "0.000002"
    assert parse_wal_days("4.000000") == 4 * DAY
    assert parse_wal_days("") is None
    with pytest.raises(InputError):
        parse_wal_days("four")


def test_utxo_row_sums_equal_supply_series(tables, tmp_path):
    export_utxo_csv(tables, str(tmp_path / "u.csv"))
    export_series_csv(tables, str(tmp_path / "v.csv"))
    u, v = rows(tmp_path / "u.csv")[1:], rows(tmp_path / "v.csv")
    assert v[0] == SERIES_HEADER
    supply = SERIES_HEADER.index("supply")
    for ur, vr in zip(u, v[1:]):
        assert sum(satoshi_from_btc(x) for x in ur[1:]) == satoshi_from_btc(vr[supply])


def test_genesis_row_is_all_under_one_day(tables, tmp_path):
    export_utxo_csv(tables, str(tmp_path / "u.csv"))
    first = rows(tmp_path / "u.csv")[1]
    assert first[0] == "2009/01/03"
    assert satoshi_from_btc(first[1]) > 0
    assert all(x == "0.00000000" for x in first[2:])


def test_export_import_export_byte_identical(tables, tmp_path):
    s1, u1 = tmp_path / "s1.csv", tmp_path / "u1.csv"
    export_stxo_csv(tables, str(s1))
    export_utxo_csv(tables, str(u1))
    back = import_tables(str(s1), str(u1), GENESIS)
    s2, u2 = tmp_path / "s2.csv", tmp_path / "u2.csv"
    export_stxo_csv(back, str(s2))
    export_utxo_csv(back, str(u2))
    assert s1.read_bytes() == s2.read_bytes()
    assert u1.read_bytes() == u2.read_bytes()


def test_import_rejects_wrong_header(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("date,newborn\n")
    with pytest.raises(InputError):
        import_tables(str(p), str(p), GENESIS)


def test_json_persistence_is_exact(tables, tmp_path):
    save_tables(tables, str(tmp_path / "t.json"))
    assert load_tables(str(tmp_path / "t.json")) == tables
    (tmp_path / "x.json").write_text("{}")
    with pytest.raises(InputError):
        load_tables(str(tmp_path / "x.json"))


def test_result_filename(tables):
    assert result_filename("bitcoin", "stxo", tables) == "bitcoinResultSTXO2009-04-02.csv"
    assert result_filename("ltc", "utxo", tables) == "ltcResultUTXO2009-04-02.csv"


def test_diff(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("date,x,y\n2009/01/03,1.00000000,2.5\n")
    b.write_text("date,x,y\n2009/01/03,1.00000000,2.500001\n")
    assert diff_csv(str(a), str(a)) is None
    assert diff_csv(str(a), str(b)) == {"line": 2, "column": "y", "a": "2.5", "b": "2.500001"}
    assert diff_csv(str(a), str(b), Decimal("0.00001")) is None
    b.write_text("date,x,y\n")
    assert diff_csv(str(a), str(b))["line"] == 2
