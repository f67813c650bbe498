from __future__ import annotations

import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from utxo_cohorts.model import (
    BUCKET_BOUNDS_SECONDS,
    BUCKET_LABELS,
    BUCKET_LOWER_DAYS,
    InputError,
    IntegrityError,
    OutputRecord,
    array_to_records,
    bucket_indices,
    btc_from_satoshi,
    classify_duration,
    date_of,
    day_index,
    end_of_day,
    parse_date,
    parse_timestamp,
    records_to_array,
    satoshi_from_btc,
)

from .conftest import DAY, GENESIS, T0


@pytest.mark.parametrize("sat,text", [(100_000_000, "1.00000000"), (1, "0.00000001"), (0, "0.00000000"),
                                      (2_099_999_997_690_000, "20999999.97690000"), (-5, "-0.00000005")])
def test_btc_from_satoshi(sat, text):
    assert btc_from_satoshi(sat) == text
    assert satoshi_from_btc(text) == sat


def test_satoshi_from_btc_rejects_sub_satoshi():
    with pytest.raises(InputError):
        satoshi_from_btc("0.000000001")
    with pytest.raises(InputError):
        satoshi_from_btc("abc")


@given(st.integers(min_value=-(10 ** 17), max_value=10 ** 17))
def test_btc_string_round_trip(sat):
    assert satoshi_from_btc(btc_from_satoshi(sat)) == sat


@pytest.mark.parametrize("seconds,label", [
    (0, -9),
    (DAY - 1, -9),
    (DAY, -7),
    (9 * 365 * DAY + 2 * DAY, 9),   # 9 calendar years incl. two leap days
    (283_824_000, 9),
    (3650 * DAY, 11),
    (10 ** 10, 11),
])
def test_classify_duration_examples(seconds, label):
    assert classify_duration(seconds) == label


@pytest.mark.parametrize("i", range(1, len(BUCKET_LOWER_DAYS)))
def test_bucket_boundaries_are_inclusive_lower(i):
    edge = BUCKET_LOWER_DAYS[i] * DAY
    assert classify_duration(edge - 1) == BUCKET_LABELS[i - 1]
    assert classify_duration(edge) == BUCKET_LABELS[i]
    assert classify_duration(edge + 1) == BUCKET_LABELS[i]


def test_classify_negative_rejected():
    with pytest.raises(InputError):
        classify_duration(-1)


@given(st.integers(min_value=0, max_value=20 * 365 * DAY))
def test_every_duration_in_exactly_one_bucket(d):
    hits = [lab for lab, lo, hi in zip(BUCKET_LABELS, BUCKET_BOUNDS_SECONDS,
                                       list(BUCKET_BOUNDS_SECONDS[1:]) + [None])
            if d >= lo and (hi is None or d < hi)]
    assert hits == [classify_duration(d)]


@given(st.lists(st.integers(min_value=0, max_value=20 * 365 * DAY), max_size=50))
def test_vectorised_buckets_agree(ds):
    idx = bucket_indices(np.array(ds, dtype=np.int64))
    assert [BUCKET_LABELS[i] for i in idx] == [classify_duration(d) for d in ds]


def test_day_index_examples():
    assert day_index(parse_timestamp("2009-01-03T00:00:01Z"), GENESIS) == 0
    assert day_index(parse_timestamp("2009-01-04T00:00:00Z"), GENESIS) == 1
    assert day_index(parse_timestamp("2021-02-10T12:00:00Z"), GENESIS) == 4421


def test_day_index_before_genesis():
    with pytest.raises(InputError):
        day_index(T0 - 1, GENESIS)


@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=0, max_value=DAY - 1))
def test_day_index_and_end_of_day(day, sec):
    t = T0 + day * DAY + sec
    assert day_index(t, GENESIS) == day
    assert end_of_day(day, GENESIS) == T0 + (day + 1) * DAY
    assert date_of(day, GENESIS) == GENESIS + dt.timedelta(days=day)


def test_parse_date_and_timestamp_forms():
    assert parse_date("2009/01/03") == parse_date("2009-01-03") == GENESIS
    assert parse_timestamp("1231006505") == 1231006505
    assert parse_timestamp("2009-01-03T18:15:05Z") == 1231006505
    assert parse_timestamp("2009-01-03T18:15:05+00:00") == 1231006505
    assert parse_timestamp("2009-01-03 18:15:05") == 1231006505
    with pytest.raises(InputError):
        parse_timestamp("yesterday")
    with pytest.raises(InputError):
        parse_date("2009-13-01")


def test_output_record_validation():
    assert OutputRecord(1, 10, 10).lifespan == 0
    with pytest.raises(IntegrityError):
        OutputRecord(1, 10, 9)
    with pytest.raises(InputError):
        OutputRecord(-1, 10)


def test_record_array_round_trip():
    recs = [OutputRecord(5, 100), OutputRecord(7, 100, 200)]
    assert list(array_to_records(records_to_array(recs))) == recs
