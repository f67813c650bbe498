from __future__ import annotations

import datetime as dt
from fractions import Fraction

import pytest

from utxo_cohorts.engine import (
    age_distribution,
    build_tables,
    dead_total,
    lifespan_distribution,
    newborn_total,
    stxo_row,
    wal,
)
from utxo_cohorts.model import BUCKET_LABELS, InputError, OutputRecord, midnight_epoch, parse_timestamp
from utxo_cohorts.oracle import oracle_tables
from utxo_cohorts.synth import ChainConfig, generate_records
from utxo_cohorts.store import PartitionStore

from .conftest import BTC, DAY, GENESIS, at, rec

ZERO = {b: 0 for b in BUCKET_LABELS}


def only(**buckets):
    out = dict(ZERO)
    for k, v in buckets.items():
        out[int(k.replace("m", "-").lstrip("b"))] = v
    return out


def test_empty_cohorts(make_store):
    store = make_store([rec(1, at(0)), rec(1, at(3))])
    assert newborn_total(store, 1) == 0
    assert dead_total(store, 2) == 0
    assert wal(store, 2) is None
    assert lifespan_distribution(store, 2) == ZERO
    row = stxo_row(store, 2)
    assert row.wal_seconds is None and row.dead == 0


def test_early_chain_day_mints_7200(tmp_path):
    recs = generate_records(ChainConfig(days=2, spend_probability=0.0))
    store = PartitionStore.build([recs], GENESIS, str(tmp_path / "s"))
    assert newborn_total(store, 0) == newborn_total(store, 1) == 7200 * BTC


def test_single_spend(make_store):
    store = make_store([rec(50, at(0, 5), at(3, 7)), rec(1, at(1))])
    assert dead_total(store, 2) == 0
    assert dead_total(store, 3) == 50 * BTC
    assert wal(store, 3) == 3 * DAY + 2


def test_wal_single_output_100_days(make_store):
    store = make_store([rec(2, at(0, 30), at(100, 30))])
    assert wal(store, 100) == 100 * DAY


def test_wal_weighted_mean_is_four_days(make_store):
    store = make_store([rec(1, at(10, 60) - 10 * DAY, at(10, 60)),
                        rec(3, at(10, 60) - 2 * DAY, at(10, 60))])
    assert wal(store, 10) == Fraction(4 * DAY)


def test_out_of_range_day(make_store):
    store = make_store([rec(1, at(0))])
    for fn in (newborn_total, dead_total, wal, lifespan_distribution, age_distribution):
        with pytest.raises(InputError):
            fn(store, 1)


def test_immortal_genesis_output(make_store):
    store = make_store([rec(50, at(0, 1))], end_day=4000)
    assert age_distribution(store, 0) == only(m9=50 * BTC)
    tables = build_tables(store, 0, 4000, chunk_days=97)
    seen = []
    for row in tables.utxo:
        (label,) = [b for b, v in row.buckets.items() if v]
        assert row.total == 50 * BTC
        if not seen or seen[-1] != label:
            seen.append(label)
    assert seen == list(BUCKET_LABELS)


# --- worked example: three 1-BTC outputs -------------------------------------------------------

WORKING_DAY = dt.date(2020, 7, 1)
SPEND_DAY = dt.date(2021, 1, 1)
END_OF_WORKING_DAY = midnight_epoch(WORKING_DAY) + DAY
SPEND_TIME = parse_timestamp("2021-01-01T00:00:00Z")


@pytest.fixture
def three_output_store(make_store):
    ages = [int(8.5 * 365 * DAY), 365 * DAY, DAY]
    recs = [OutputRecord(1 * BTC, END_OF_WORKING_DAY - a, SPEND_TIME) for a in ages]
    return make_store(recs), recs


def test_three_outputs_ages_at_working_date(three_output_store):
    store, recs = three_output_store
    d = (WORKING_DAY - GENESIS).days
    assert [store.end_of(d) - r.born for r in recs] == [int(8.5 * 365 * DAY), 365 * DAY, DAY]
    assert age_distribution(store, d) == only(b9=BTC, b1=BTC, m7=BTC)


def test_three_outputs_lifespans_at_spend_date(three_output_store):
    store, recs = three_output_store
    d = (SPEND_DAY - GENESIS).days
    assert (SPEND_TIME - END_OF_WORKING_DAY) // DAY == 183
    assert sorted(r.lifespan for r in recs) == sorted(
        [int((8.5 * 365 + 183) * DAY), (365 + 183) * DAY, (1 + 183) * DAY])
    assert lifespan_distribution(store, d) == only(b9=BTC, b1=BTC, m1=BTC)
    assert dead_total(store, d) == 3 * BTC
    assert age_distribution(store, d) == ZERO


def test_three_outputs_engine_matches_oracle(three_output_store):
    store, recs = three_output_store
    d = (WORKING_DAY - GENESIS).days
    last = (SPEND_DAY - GENESIS).days
    assert build_tables(store, d, last, chunk_days=50) == oracle_tables(recs, GENESIS, d, last)


# --- oracle equivalence on generated chains ---------------------------------------------------

def test_single_day_range(small_store):
    tables = build_tables(small_store, 12, 12)
    assert len(tables) == 1 and tables.utxo[0].date == 12


def test_matches_oracle(small_store, small_records):
    tables = build_tables(small_store)
    assert tables.first_difference(oracle_tables(small_records, GENESIS, 0, small_store.last_day)) is None


@pytest.mark.parametrize("chunk,jobs", [(1, 1), (30, 1), (180, 1), (7, 3)])
def test_chunking_and_jobs_do_not_change_results(small_store, chunk, jobs):
    ref = build_tables(small_store, chunk_days=180)
    assert build_tables(small_store, chunk_days=chunk, jobs=jobs).first_difference(ref) is None


def test_sub_range_matches_full_build(small_store):
    full = build_tables(small_store)
    part = build_tables(small_store, 20, 50, chunk_days=9)
    assert part.stxo == full.stxo[20:51]
    assert part.utxo == full.utxo[20:51]


def test_long_chain_all_buckets_match_oracle(tmp_path):
    cfg = ChainConfig(days=4000, block_interval=86400, spend_probability=0.02, seed=5)
    recs = generate_records(cfg)
    store = PartitionStore.build([recs], GENESIS, str(tmp_path / "s"))
    tables = build_tables(store, chunk_days=365)
    for i in range(len(BUCKET_LABELS) - 1):  # no spend reaches ten years in 4000 days here
        assert any(r.lifespan_buckets[i] for r in tables.stxo)
    assert all(v > 0 for v in tables.utxo[-1].age_buckets[1:])
    assert tables.first_difference(oracle_tables(recs, GENESIS, 0, store.last_day)) is None


def test_huge_values_stay_exact(make_store):
    big = 2 ** 63 - 1
    recs = [OutputRecord(big, at(0, 5), at(2, 5)), OutputRecord(big, at(0, 9)),
            OutputRecord(big - 2, at(1, 3), at(2, 7)), OutputRecord(3, at(1, 4))]
    store = make_store(recs)
    tables = build_tables(store)
    assert tables == oracle_tables(recs, GENESIS, 0, 2)
    assert tables.stxo[2].dead == 2 * big - 2
    assert tables.utxo[1].total == 3 * big - 2 + 3
