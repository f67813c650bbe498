from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from utxo_cohorts.model import CohortTables, StxoRow
from utxo_cohorts.series import circulating_supply, net_new, velocity

from .conftest import BTC, GENESIS


def tables_from(newborn, dead):
    t = CohortTables(GENESIS)
    for d, (nb, dd) in enumerate(zip(newborn, dead)):
        t.stxo.append(StxoRow(d, nb, dd, None))
    return t


def test_net_new_coinbase_only_day():
    assert net_new(tables_from([7200 * BTC], [0])) == [7200 * BTC]


def test_supply_running_sum():
    t = tables_from([50 * BTC] * 3, [0, 0, 25 * BTC])
    assert circulating_supply(t) == [50 * BTC, 100 * BTC, 125 * BTC]


def test_no_spends_means_zero_velocity():
    assert velocity(tables_from([BTC] * 40, [0] * 40)) == [0.0] * 40


def constant_supply(days=60):
    # day 0 mints 110 BTC and retires 10; afterwards 10 BTC in, 10 BTC out every day
    return tables_from([110 * BTC] + [10 * BTC] * (days - 1), [10 * BTC] * days)


def test_constant_supply_velocity_three():
    t = constant_supply()
    assert set(circulating_supply(t)) == {100 * BTC}
    v = velocity(t)
    assert all(x == 3.0 for x in v[30:])
    assert v[29] == 3.0


def test_clipped_window_day_zero():
    v = velocity(constant_supply())
    assert v[0] == 0.1
    # explicit window sums for the clipped days
    for i in range(30):
        assert v[i] == float(Fraction((i + 1) * 10, 100))


def test_zero_supply_is_absent():
    assert velocity(tables_from([0, 5], [0, 0])) == [None, 0.0]


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(0, 10 ** 12), st.integers(0, 10 ** 12)), min_size=1, max_size=60),
       st.integers(1, 10 ** 6))
def test_velocity_scale_invariant(flows, k):
    newborn = [a + b for a, b in flows]   # newborn >= dead keeps supply non-negative
    dead = [b for _, b in flows]
    v1 = velocity(tables_from(newborn, dead))
    v2 = velocity(tables_from([k * x for x in newborn], [k * x for x in dead]))
    for a, b in zip(v1, v2):
        assert (a is None) == (b is None)
        if a is not None:
            assert a >= 0
            assert b == pytest.approx(a, rel=1e-12, abs=0)
