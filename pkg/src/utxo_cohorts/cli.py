"""Command-line front end: ``utxo-cohorts <subcommand> ...``.

Exit codes: 0 ok, 1 validation failure or differing files, 2 input error,
3 I/O error.  Errors are printed to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from decimal import Decimal
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import charts, engine, export, ingest, oracle, synth, validation
from .model import (
    BITCOIN_GENESIS,
    SATOSHI_PER_BTC,
    SECONDS_PER_DAY,
    SPENT_SENTINEL,
    CohortError,
    InputError,
    IntegrityError,
    date_of,
    midnight_epoch,
    parse_date,
)
from .store import DEFAULT_CHUNK_DAYS, PartitionStore, StoreLockedError, split_by_day

log = logging.getLogger("utxo_cohorts")

EXIT_OK, EXIT_VALIDATION, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3

# Option defaults applied after --config values, so a config file can set them.
DEFAULTS: Dict[str, Any] = {
    "genesis": BITCOIN_GENESIS.isoformat(),
    "jobs": 1,
    "chunk_days": DEFAULT_CHUNK_DAYS,
    "chain_name": "bitcoin",
    "tolerance": "0",
}


def _emit(obj: Any) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def _day(store_or_genesis, text: Optional[str]) -> Optional[int]:
    if text is None:
        return None
    genesis = getattr(store_or_genesis, "genesis", store_or_genesis)
    return (parse_date(text) - genesis).days


def _tables_path(args: argparse.Namespace) -> str:
    if args.tables:
        return args.tables
    if getattr(args, "store", None):
        return os.path.join(args.store, "tables.json")
    raise InputError("--tables is required")


# --- subcommands ------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    if args.chain_config:
        cfg = synth.load_config(args.chain_config)
    elif args.config_data.get("chain"):
        cfg = synth.ChainConfig.from_mapping(args.config_data["chain"])
    else:
        cfg = synth.ChainConfig()
    overrides = {k: v for k, v in (("seed", args.seed), ("days", args.days)) if v is not None}
    if args.preset:
        overrides["block_interval"] = synth.BLOCK_INTERVAL_PRESETS[args.preset]
    if args.spend_probability is not None:
        overrides["spend_probability"] = args.spend_probability
    if overrides:
        cfg = synth.ChainConfig.from_mapping({**cfg.to_mapping(), **overrides})
    records = synth.generate_records(cfg)
    ingest.write_derived(records, args.out, args.format)
    summary = {"records": len(records), "out": args.out, "config": cfg.to_mapping()}
    if args.day_files:
        os.makedirs(args.day_files, exist_ok=True)
        for d in range(cfg.days):
            name = os.path.join(args.day_files, f"{date_of(d, cfg.genesis).isoformat()}.csv")
            ingest.write_derived(split_by_day(records, cfg.genesis, d), name)
        summary["day_files"] = cfg.days
    _emit(summary)
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    genesis = parse_date(args.genesis)
    stats = ingest.ParseStats()
    end_day = _day(genesis, args.end_date)
    if args.empty:
        store = PartitionStore.create_empty(args.store, genesis)
    elif args.derived:
        batches = ingest.iter_derived_batches(args.derived, args.format, stats=stats)
        store = PartitionStore.build(batches, genesis, args.store, end_day)
    elif args.outputs and args.inputs:
        records = ingest.join_inputs_outputs(ingest.iter_raw_outputs(args.outputs),
                                             ingest.iter_raw_inputs(args.inputs), stats)
        store = PartitionStore.build(ingest.batched(records), genesis, args.store, end_day)
    else:
        raise InputError("give --derived FILE, --outputs and --inputs, or --empty")
    _emit({"store": args.store, "accepted": stats.accepted, "rejected": stats.rejected,
           "dangling_inputs": stats.dangling_inputs,
           "errors": [{"line": ln, "message": m} for ln, m in stats.errors[:20]],
           "total_records": store.total_records, "last_date": store.manifest["last_date"]})
    return EXIT_INPUT if (args.strict and stats.rejected) else EXIT_OK


def cmd_build(args: argparse.Namespace) -> int:
    store = PartitionStore.open(args.store)
    first = _day(store, args.from_date) or 0
    last = _day(store, args.to_date)
    tables = engine.build_tables(store, first, last, chunk_days=args.chunk_days, jobs=args.jobs)
    path = _tables_path(args)
    export.save_tables(tables, path)
    _emit({"tables": path, "days": len(tables)})
    return EXIT_OK


def cmd_update(args: argparse.Namespace) -> int:
    store = PartitionStore.open(args.store, verify=False)
    stats = ingest.ParseStats()
    batches = list(ingest.iter_derived_batches(args.day_file, args.format, stats=stats))
    if stats.rejected:
        raise InputError(f"{args.day_file}: {stats.rejected} malformed row(s), first at line "
                         f"{stats.errors[0][0]}: {stats.errors[0][1]}")
    batch = np.concatenate(batches) if batches else np.empty(0, dtype=ingest.RECORD_DTYPE)
    day = _day(store, args.date)
    if day is None and len(batch):
        latest = max(int(batch["born"].max()),
                     int(batch["spent"][batch["spent"] != SPENT_SENTINEL].max(initial=0)))
        day = (latest - midnight_epoch(store.genesis)) // SECONDS_PER_DAY
    manifest = store.append_day(batch, day)
    _emit({"store": args.store, "last_date": manifest["last_date"],
           "total_records": manifest["total_records"]})
    return EXIT_OK


def _export_one(tables, kind: str, args: argparse.Namespace) -> str:
    if args.out and args.kind != "all":
        path = args.out
    else:
        path = os.path.join(args.out_dir or ".", export.result_filename(args.chain_name, kind, tables))
    export.EXPORTERS[kind](tables, path)
    return path


def cmd_export(args: argparse.Namespace) -> int:
    tables = export.load_tables(_tables_path(args))
    kinds = list(export.EXPORTERS) if args.kind == "all" else [args.kind]
    _emit({"written": [_export_one(tables, k, args) for k in kinds]})
    return EXIT_OK


def _halving_arg(args: argparse.Namespace) -> Optional[tuple]:
    if args.halving:
        parts = args.halving.split(",")
        if len(parts) != 3:
            raise InputError("--halving wants INITIAL_BTC,INTERVAL_BLOCKS,BLOCKS_PER_DAY")
        initial = int(Decimal(parts[0]) * SATOSHI_PER_BTC)
        return initial, int(parts[1]), int(parts[2])
    if args.chain_config:
        return synth.load_config(args.chain_config).halving
    return None


def cmd_validate(args: argparse.Namespace) -> int:
    reports: List[validation.Report] = []
    if args.store:
        try:
            PartitionStore.open(args.store, verify=True)
            reports.append(validation.Report("store_integrity", "PASS"))
        except IntegrityError as exc:
            reports.append(validation.Report("store_integrity", "FAIL", details={"error": str(exc)}))
    tables = export.load_tables(_tables_path(args))
    halving = _halving_arg(args)
    tolerance = None if args.halving_tolerance is None else int(args.halving_tolerance)
    reports += validation.run_all(tables)
    if halving is not None:
        reports.append(validation.check_halving(tables, *halving, tolerance=tolerance))
    for r in reports:
        print(r.text(), file=sys.stderr)
    _emit([r.to_json() for r in reports])
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VALIDATION


def cmd_oracle(args: argparse.Namespace) -> int:
    genesis = parse_date(args.genesis)
    records, stats = ingest.read_derived(args.derived, args.format)
    if args.to_date:
        last = _day(genesis, args.to_date)
    else:
        spent = records["spent"][records["spent"] != SPENT_SENTINEL]
        latest = max(int(records["born"].max(initial=0)), int(spent.max(initial=0)))
        last = (latest - midnight_epoch(genesis)) // SECONDS_PER_DAY
    first = _day(genesis, args.from_date) or 0
    tables = oracle.oracle_tables(records, genesis, first, last)
    export.save_tables(tables, args.tables)
    _emit({"tables": args.tables, "days": len(tables), "records": len(records),
           "rejected": stats.rejected})
    return EXIT_OK


def cmd_chart(args: argparse.Namespace) -> int:
    tables = export.load_tables(_tables_path(args))
    written = []
    if args.out:
        charts.emit_chart_spec(tables, args.kind, args.out)
        written.append(args.out)
    if args.png:
        charts.render_chart(tables, args.kind, args.png)
        written.append(args.png)
    if not written:
        raise InputError("give --out for the spec and/or --png for a rendered figure")
    _emit({"written": written})
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    """CSV exports plus chart specs and rendered figures in one directory."""
    tables = export.load_tables(_tables_path(args))
    out_dir = args.out_dir
    args.out = None
    args.kind = "all"
    written = [_export_one(tables, k, args) for k in export.EXPORTERS]
    for kind in charts.CHART_KINDS:
        base = os.path.join(out_dir, f"{args.chain_name}-{kind}")
        charts.emit_chart_spec(tables, kind, base + ".json")
        written.append(base + ".json")
        if not args.no_figures:
            charts.render_chart(tables, kind, base + ".png")
            written.append(base + ".png")
    reports = validation.run_all(tables)
    with open(os.path.join(out_dir, "validation.json"), "w", encoding="utf-8") as fh:
        json.dump([r.to_json() for r in reports], fh, indent=1)
    _emit({"written": written, "validation": [r.status for r in reports]})
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VALIDATION


def cmd_diff(args: argparse.Namespace) -> int:
    first = export.diff_csv(args.a, args.b, Decimal(args.tolerance))
    _emit({"identical": first is None, "first_difference": first})
    return EXIT_OK if first is None else EXIT_VALIDATION


# --- parser ---------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON/TOML file supplying option defaults")
    common.add_argument("--jobs", type=int, help="worker threads (default 1)")
    common.add_argument("--chunk-days", type=int, dest="chunk_days",
                        help=f"age-window size in days (default {DEFAULT_CHUNK_DAYS})")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="utxo-cohorts", description=__doc__.splitlines()[0],
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_text, parents=[common])
        sp.set_defaults(func=func)
        return sp

    sp = add("synth", cmd_synth, "generate a synthetic chain as a derived-table file")
    sp.add_argument("--out", "-o", required=True)
    sp.add_argument("--format", choices=["csv", "ndjson"])
    sp.add_argument("--chain-config", dest="chain_config")
    sp.add_argument("--preset", choices=sorted(synth.BLOCK_INTERVAL_PRESETS))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--days", type=int)
    sp.add_argument("--spend-probability", type=float, dest="spend_probability")
    sp.add_argument("--day-files", dest="day_files", help="also write one update file per day here")

    sp = add("ingest", cmd_ingest, "parse or join raw files into a partition store")
    sp.add_argument("--store", required=True)
    sp.add_argument("--genesis")
    sp.add_argument("--derived")
    sp.add_argument("--format", choices=["csv", "ndjson"])
    sp.add_argument("--outputs")
    sp.add_argument("--inputs")
    sp.add_argument("--end-date", dest="end_date")
    sp.add_argument("--empty", action="store_true", help="create a store with no days yet")
    sp.add_argument("--strict", action="store_true", help="exit 2 if any row was rejected")

    sp = add("build", cmd_build, "compute daily tables from a store")
    sp.add_argument("--store", required=True)
    sp.add_argument("--tables")
    sp.add_argument("--from-date", dest="from_date")
    sp.add_argument("--to-date", dest="to_date")

    sp = add("update", cmd_update, "append the next day to a store")
    sp.add_argument("--store", required=True)
    sp.add_argument("--day-file", dest="day_file", required=True)
    sp.add_argument("--date")
    sp.add_argument("--format", choices=["csv", "ndjson"])

    sp = add("export", cmd_export, "write STXO/UTXO/series CSVs")
    sp.add_argument("--tables")
    sp.add_argument("--store")
    sp.add_argument("--kind", choices=["stxo", "utxo", "series", "all"], default="all")
    sp.add_argument("--out")
    sp.add_argument("--out-dir", dest="out_dir")
    sp.add_argument("--chain", dest="chain_name")

    sp = add("validate", cmd_validate, "run consistency checks")
    sp.add_argument("--tables")
    sp.add_argument("--store")
    sp.add_argument("--halving", help="INITIAL_BTC,INTERVAL_BLOCKS,BLOCKS_PER_DAY")
    sp.add_argument("--halving-tolerance", dest="halving_tolerance",
                    help="satoshi; default one block's subsidy")
    sp.add_argument("--chain-config", dest="chain_config")

    sp = add("oracle", cmd_oracle, "brute-force tables straight from a derived file")
    sp.add_argument("--derived", required=True)
    sp.add_argument("--format", choices=["csv", "ndjson"])
    sp.add_argument("--genesis")
    sp.add_argument("--tables", required=True)
    sp.add_argument("--from-date", dest="from_date")
    sp.add_argument("--to-date", dest="to_date")

    sp = add("chart", cmd_chart, "emit a chart spec and/or a rendered figure")
    sp.add_argument("--tables")
    sp.add_argument("--store")
    sp.add_argument("--kind", choices=charts.CHART_KINDS, required=True)
    sp.add_argument("--out")
    sp.add_argument("--png")

    sp = add("report", cmd_report, "CSVs, chart specs and figures into one directory")
    sp.add_argument("--tables")
    sp.add_argument("--store")
    sp.add_argument("--out-dir", dest="out_dir", required=True)
    sp.add_argument("--chain", dest="chain_name")
    sp.add_argument("--no-figures", dest="no_figures", action="store_true")

    sp = add("diff", cmd_diff, "compare two exported CSVs cell by cell")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--tolerance")
    return p


def _load_config(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    return synth.read_mapping(path)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.config_data = _load_config(args.config)
        for key, value in {**DEFAULTS, **{k.replace("-", "_"): v for k, v in args.config_data.items()
                                           if k != "chain"}}.items():
            if getattr(args, key, None) is None:
                setattr(args, key, value)
        if args.jobs < 1 or args.chunk_days < 1:
            raise InputError("--jobs and --chunk-days must be positive")
        return args.func(args)
    except (StoreLockedError, OSError) as exc:
        return _fail(exc, EXIT_IO)
    except (CohortError, ValueError) as exc:
        return _fail(exc, EXIT_INPUT)


def _fail(exc: BaseException, code: int) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}),
          file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
