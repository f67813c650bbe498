from __future__ import annotations

import datetime as dt

import numpy as np
import pytest

from utxo_cohorts.model import (
    BITCOIN_GENESIS,
    SATOSHI_PER_BTC,
    SECONDS_PER_DAY,
    OutputRecord,
    midnight_epoch,
    records_to_array,
)
from utxo_cohorts.store import PartitionStore
from utxo_cohorts.synth import ChainConfig, generate_records

GENESIS = BITCOIN_GENESIS
T0 = midnight_epoch(GENESIS)
DAY = SECONDS_PER_DAY
BTC = SATOSHI_PER_BTC


def at(day: float, seconds: int = 0) -> int:
    """Epoch second ``day`` days (may be fractional) plus ``seconds`` after genesis midnight."""
    return T0 + int(round(day * DAY)) + seconds


@pytest.fixture
def make_store(tmp_path):
    counter = iter(range(1000))

    def make(records, genesis: dt.date = GENESIS, end_day=None) -> PartitionStore:
        if not isinstance(records, np.ndarray):
            records = records_to_array(list(records))
        root = tmp_path / f"store{next(counter)}"
        return PartitionStore.build([records], genesis, str(root), end_day)

    return make


SMALL_CHAIN = ChainConfig(days=90, block_interval=3600, spend_probability=0.08, seed=11)


@pytest.fixture(scope="session")
def small_records() -> np.ndarray:
    return generate_records(SMALL_CHAIN)


@pytest.fixture(scope="session")
def small_store(small_records, tmp_path_factory) -> PartitionStore:
    root = tmp_path_factory.mktemp("small") / "store"
    return PartitionStore.build([small_records], GENESIS, str(root))


def rec(value_btc: float, born: int, spent=None) -> OutputRecord:
    return OutputRecord(int(round(value_btc * BTC)), born, spent)


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
