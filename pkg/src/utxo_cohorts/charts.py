"""Declarative chart specs (Vega-Lite, data inlined) and matplotlib renderings."""

from __future__ import annotations

import json
import os
from fractions import Fraction
from typing import Any, Dict, List

from .export import format_wal_days
from .model import BUCKET_NAMES, SATOSHI_PER_BTC, SECONDS_PER_DAY, CohortTables, InputError
from .series import circulating_supply, net_new, velocity

CHART_KINDS = ("lifespan-share", "age-stack", "supply-reward", "wal", "velocity")
VEGA_LITE_SCHEMA = "https://vega.github.io/schema/vega-lite/v5.json"

_TITLES = {
    "lifespan-share": "Lifespan distribution of spent outputs (% of daily spent value)",
    "age-stack": "Unspent value by age",
    "supply-reward": "Daily net new issuance and circulating supply",
    "wal": "Weighted average lifespan of spent outputs",
    "velocity": "30-day token velocity",
}


def _btc(sat: int) -> float:
    return float(Fraction(sat, SATOSHI_PER_BTC))


def chart_data(tables: CohortTables, kind: str) -> List[Dict[str, Any]]:
    """Long-form rows backing one chart kind."""
    iso = lambda d: tables.date(d).isoformat()  # noqa: E731
    if kind == "lifespan-share":
        rows = []
        for r in tables.stxo:
            if r.dead == 0:
                continue
            for name, v in zip(BUCKET_NAMES, r.lifespan_buckets):
                if v:
                    rows.append({"date": iso(r.date), "bucket": name,
                                 "percent": float(Fraction(100 * v, r.dead))})
        return rows
    if kind == "age-stack":
        return [{"date": iso(r.date), "bucket": name, "btc": _btc(v)}
                for r in tables.utxo for name, v in zip(BUCKET_NAMES, r.age_buckets)]
    if kind == "supply-reward":
        return [{"date": iso(r.date), "net_new_btc": _btc(n), "supply_btc": _btc(s)}
                for r, n, s in zip(tables.stxo, net_new(tables), circulating_supply(tables))]
    if kind == "wal":
        return [{"date": iso(r.date), "wal_days": float(format_wal_days(r.wal_seconds))}
                for r in tables.stxo if r.wal_seconds is not None]
    if kind == "velocity":
        return [{"date": iso(r.date), "velocity": v}
                for r, v in zip(tables.stxo, velocity(tables)) if v is not None]
    raise InputError(f"unknown chart kind {kind!r}; expected one of {', '.join(CHART_KINDS)}")


def chart_spec(tables: CohortTables, kind: str) -> Dict[str, Any]:
    data = chart_data(tables, kind)
    x = {"field": "date", "type": "temporal", "title": "date"}
    spec: Dict[str, Any] = {"$schema": VEGA_LITE_SCHEMA, "title": _TITLES[kind],
                            "width": 800, "height": 400, "data": {"values": data}}
    order = {"field": "bucket", "sort": list(BUCKET_NAMES)}
    if kind == "lifespan-share":
        spec.update(mark="line", encoding={
            "x": x,
            "y": {"field": "percent", "type": "quantitative", "scale": {"type": "log"},
                  "title": "% of spent value"},
            "color": {"field": "bucket", "type": "nominal", "sort": list(BUCKET_NAMES)},
        })
    elif kind == "age-stack":
        spec.update(mark="area", encoding={
            "x": x,
            "y": {"field": "btc", "type": "quantitative", "stack": "zero", "title": "BTC"},
            "color": {"field": "bucket", "type": "nominal", "sort": list(BUCKET_NAMES)},
            "order": order,
        })
    elif kind == "supply-reward":
        spec.update(layer=[
            {"mark": "line", "encoding": {"x": x, "y": {"field": "net_new_btc", "type": "quantitative",
                                                        "title": "net new BTC per day"}}},
            {"mark": {"type": "line", "color": "firebrick"},
             "encoding": {"x": x, "y": {"field": "supply_btc", "type": "quantitative",
                                        "title": "circulating supply (BTC)"}}},
        ], resolve={"scale": {"y": "independent"}})
    elif kind == "wal":
        spec.update(mark="line", encoding={
            "x": x, "y": {"field": "wal_days", "type": "quantitative", "title": "WAL (days)"}})
    else:
        spec.update(mark="line", encoding={
            "x": x, "y": {"field": "velocity", "type": "quantitative", "title": "velocity"}})
    return spec


def emit_chart_spec(tables: CohortTables, kind: str, path: str) -> Dict[str, Any]:
    spec = chart_spec(tables, kind)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec, fh, indent=1)
        fh.write("\n")
    return spec


def render_chart(tables: CohortTables, kind: str, path: str) -> None:
    """Draw one chart kind to an image file with matplotlib (Agg backend)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    if kind not in CHART_KINDS:
        raise InputError(f"unknown chart kind {kind!r}")
    dates = np.array([tables.date(r.date) for r in tables.stxo], dtype="datetime64[D]")
    fig, ax = plt.subplots(figsize=(10, 5))
    if kind == "lifespan-share":
        for i, name in enumerate(BUCKET_NAMES):
            share = np.array([100.0 * r.lifespan_buckets[i] / r.dead if r.dead else np.nan
                              for r in tables.stxo])
            if np.nansum(share) > 0:
                ax.plot(dates, np.where(share > 0, share, np.nan), label=name, lw=0.8)
        ax.set_yscale("log")
        ax.set_ylabel("% of spent value")
        ax.legend(ncol=4, fontsize=8)
    elif kind == "age-stack":
        stack = np.array([r.age_buckets for r in tables.utxo], dtype=float).T / SATOSHI_PER_BTC
        ax.stackplot(dates, stack, labels=BUCKET_NAMES)
        ax.set_ylabel("BTC")
        ax.legend(ncol=4, fontsize=8, loc="upper left")
    elif kind == "supply-reward":
        ax.plot(dates, np.array(net_new(tables), dtype=float) / SATOSHI_PER_BTC, lw=0.8)
        ax.set_ylabel("net new BTC per day")
        ax2 = ax.twinx()
        ax2.plot(dates, np.array(circulating_supply(tables), dtype=float) / SATOSHI_PER_BTC,
                 color="firebrick", lw=1.2)
        ax2.set_ylabel("circulating supply (BTC)")
    elif kind == "wal":
        wal = [float(r.wal_seconds) / SECONDS_PER_DAY if r.wal_seconds is not None else np.nan
               for r in tables.stxo]
        ax.plot(dates, wal, lw=0.8)
        ax.set_ylabel("WAL (days)")
    else:
        v = [np.nan if x is None else x for x in velocity(tables)]
        ax.plot(dates, v, lw=0.8)
        ax.set_ylabel("velocity")
    ax.set_title(_TITLES[kind])
    fig.autofmt_xdate()
    fig.tight_layout()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
