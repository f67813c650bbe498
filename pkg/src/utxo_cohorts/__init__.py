"""Daily birth/death cohort analytics for UTXO-based chains."""

from .engine import age_distribution, build_tables, dead_total, lifespan_distribution, newborn_total, wal
from .model import (
    BUCKET_LABELS,
    CohortTables,
    OutputRecord,
    StxoRow,
    UtxoRow,
    btc_from_satoshi,
    classify_duration,
    day_index,
)
from .series import circulating_supply, net_new, velocity
from .store import PartitionStore

__version__ = "0.1.0"

__all__ = [
    "BUCKET_LABELS", "CohortTables", "OutputRecord", "PartitionStore", "StxoRow", "UtxoRow",
    "age_distribution", "btc_from_satoshi", "build_tables", "circulating_supply", "classify_duration",
    "day_index", "dead_total", "lifespan_distribution", "net_new", "newborn_total", "velocity", "wal",
]
