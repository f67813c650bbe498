"""Deterministic synthetic UTXO chains with a configurable subsidy schedule.

Blocks arrive at a fixed interval from genesis midnight.  Each block mints one
coinbase output.  Every output draws its fate when created: spent later the
same day (probability ``same_day_multiplier * spend_probability``), spent on a
later day drawn from an age-decaying daily hazard
``spend_probability / (1 + age_days / age_scale_days)``, or never.  Spends in
one block are grouped into transactions that emit one or two outputs worth the
inputs minus a fee; fees are re-minted in the same block as a miner output, so
each day's net new value is exactly that day's subsidy.

Randomness comes from numpy's PCG64 seeded with ``seed``.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .model import (
    RECORD_DTYPE,
    SATOSHI_PER_BTC,
    SECONDS_PER_DAY,
    SPENT_SENTINEL,
    BITCOIN_GENESIS,
    InputError,
    midnight_epoch,
    parse_date,
)

BLOCK_INTERVAL_PRESETS = {"btc": 600, "bch": 600, "ltc": 150, "dash": 150, "doge": 60, "zec": 75}


@dataclass(frozen=True)
class ChainConfig:
    genesis: dt.date = BITCOIN_GENESIS
    block_interval: int = 600
    initial_subsidy: int = 50 * SATOSHI_PER_BTC
    halving_interval: int = 210_000
    days: int = 400
    spend_probability: float = 0.05
    age_scale_days: float = 30.0
    same_day_multiplier: float = 8.0
    split_probability: float = 0.2
    join_probability: float = 0.75
    fee_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.block_interval <= 0 or SECONDS_PER_DAY % self.block_interval:
            raise InputError("block_interval must be a positive divisor of 86400")
        if self.initial_subsidy < 0 or self.halving_interval <= 0 or self.days <= 0:
            raise InputError("subsidy must be >= 0; halving interval and days positive")
        for name in ("spend_probability", "split_probability", "join_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InputError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.fee_fraction < 1.0:
            raise InputError("fee_fraction must lie in [0, 1)")
        if self.age_scale_days <= 0 or self.same_day_multiplier < 0:
            raise InputError("age_scale_days must be positive, same_day_multiplier >= 0")
        if self.spend_probability * self.same_day_multiplier >= 1.0:
            # every output would be re-spent within its day forever
            raise InputError("spend_probability * same_day_multiplier must stay below 1")
        if not 0 <= self.seed < 1 << 64:
            raise InputError("seed must be a 64-bit unsigned integer")

    @property
    def blocks_per_day(self) -> int:
        return SECONDS_PER_DAY // self.block_interval

    @property
    def halving(self) -> Tuple[int, int, int]:
        return self.initial_subsidy, self.halving_interval, self.blocks_per_day

    @classmethod
    def preset(cls, chain: str, **overrides: Any) -> "ChainConfig":
        try:
            interval = BLOCK_INTERVAL_PRESETS[chain.lower()]
        except KeyError as exc:
            raise InputError(f"unknown chain preset {chain!r}") from exc
        return cls(block_interval=interval, **overrides)

    @classmethod
    def from_mapping(cls, data: Dict[str, Any]) -> "ChainConfig":
        data = dict(data)
        chain = data.pop("preset", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        if "genesis" in data:
            data["genesis"] = parse_date(str(data["genesis"]))
        if chain is not None:
            return cls.preset(chain, **data)
        return cls(**data)

    def to_mapping(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        out["genesis"] = self.genesis.isoformat()
        return out


def read_mapping(path: str) -> Dict[str, Any]:
    """Load a JSON or TOML file into a dict."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if os.path.splitext(path)[1].lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        return tomllib.loads(raw.decode("utf-8"))
    return json.loads(raw)


def load_config(path: str) -> ChainConfig:
    """Read a chain config from JSON or TOML."""
    data = read_mapping(path)
    return ChainConfig.from_mapping(data.get("chain", data))


def _death_cdf(cfg: ChainConfig) -> np.ndarray:
    """P(spent within k days | not spent on the birth day), k = 1..days."""
    k = np.arange(1, cfg.days + 1, dtype=np.float64)
    hazard = np.minimum(1.0, cfg.spend_probability / (1.0 + k / cfg.age_scale_days))
    return 1.0 - np.cumprod(1.0 - hazard)


class _Generator:
    def __init__(self, cfg: ChainConfig) -> None:
        self.cfg = cfg
        self.rng = np.random.Generator(np.random.PCG64(cfg.seed))
        self.bpd = cfg.blocks_per_day
        self.origin = midnight_epoch(cfg.genesis)
        self.cdf = _death_cdf(cfg)
        self.same_day = cfg.spend_probability * cfg.same_day_multiplier
        self.pending: Dict[int, List[Tuple[np.ndarray, np.ndarray]]] = {}
        self.out: List[np.ndarray] = []

    def subsidies(self, heights: np.ndarray) -> np.ndarray:
        halvings = heights // self.cfg.halving_interval
        return np.where(halvings < 63, np.right_shift(self.cfg.initial_subsidy, np.minimum(halvings, 62)), 0)

    def settle(self, day: int, values: np.ndarray, born_h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Emit records for new outputs; return today's spend events (value, height)."""
        n = len(values)
        last_h = (day + 1) * self.bpd - 1
        u = self.rng.random(n)
        same = u < self.same_day
        later_u = self.rng.random(n)
        offset = np.searchsorted(self.cdf, later_u, side="right") + 1
        spend_day = np.where(same, day, day + offset)
        alive_past_end = spend_day >= self.cfg.days
        first_h = np.where(same, born_h, spend_day * self.bpd)
        top_h = np.where(same, last_h, spend_day * self.bpd + self.bpd - 1)
        spend_h = self.rng.integers(first_h, top_h + 1)
        rec = np.empty(n, dtype=RECORD_DTYPE)
        rec["value"] = values
        rec["born"] = self.origin + born_h * self.cfg.block_interval
        rec["spent"] = np.where(alive_past_end, SPENT_SENTINEL,
                                self.origin + spend_h * self.cfg.block_interval)
        self.out.append(rec)
        later = ~same & ~alive_past_end
        for d in np.unique(spend_day[later]).tolist():
            sel = later & (spend_day == d)
            self.pending.setdefault(d, []).append((values[sel], spend_h[sel]))
        return values[same], spend_h[same]

    def transactions(self, values: np.ndarray, heights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Group spend events into transactions; return created outputs (value, height)."""
        if len(values) == 0:
            return values, heights
        order = np.argsort(heights, kind="stable")
        values, heights = values[order], heights[order]
        starts = self.rng.random(len(values)) >= self.cfg.join_probability
        starts[0] = True
        starts[1:] |= heights[1:] != heights[:-1]
        first = np.flatnonzero(starts)
        tx_value = np.add.reduceat(values, first)
        tx_height = heights[first]
        fee = np.minimum(np.floor(tx_value * self.cfg.fee_fraction).astype(np.int64), tx_value)
        net = tx_value - fee
        split = self.rng.random(len(net)) < self.cfg.split_probability
        frac = self.rng.random(len(net))
        part = np.clip(np.floor(net * frac).astype(np.int64), 0, net)
        out_v = [np.where(split, part, net), (net - part)[split]]
        out_h = [tx_height, tx_height[split]]
        if fee.any():
            blocks, inv = np.unique(tx_height, return_inverse=True)
            fees = np.zeros(len(blocks), dtype=np.int64)
            np.add.at(fees, inv, fee)
            out_v.append(fees)
            out_h.append(blocks)
        return np.concatenate(out_v), np.concatenate(out_h)

    def run(self) -> np.ndarray:
        for day in range(self.cfg.days):
            heights = np.arange(day * self.bpd, (day + 1) * self.bpd, dtype=np.int64)
            chunks = self.pending.pop(day, [])
            ev_v = np.concatenate([c[0] for c in chunks]) if chunks else np.empty(0, np.int64)
            ev_h = np.concatenate([c[1] for c in chunks]) if chunks else np.empty(0, np.int64)
            tx_v, tx_h = self.transactions(ev_v, ev_h)
            new_v = np.concatenate([self.subsidies(heights), tx_v])
            new_h = np.concatenate([heights, tx_h])
            while len(new_v):
                ev_v, ev_h = self.settle(day, new_v, new_h)
                new_v, new_h = self.transactions(ev_v, ev_h)
        return np.concatenate(self.out) if self.out else np.empty(0, dtype=RECORD_DTYPE)


def generate_records(cfg: ChainConfig) -> np.ndarray:
    """All records of the synthetic chain, in generation order."""
    return _Generator(cfg).run()


def generate(cfg: ChainConfig, path: str, fmt: Optional[str] = None) -> int:
    """Write the chain as a derived-table file; returns the record count."""
    from .ingest import write_derived

    records = generate_records(cfg)
    write_derived(records, path, fmt)
    return len(records)


def scaled_supply_cap(initial: int, interval: int) -> int:
    """Total satoshi ever minted under right-shift halving."""
    return sum((initial >> n) * interval for n in range(64))
