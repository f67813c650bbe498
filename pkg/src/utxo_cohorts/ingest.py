"""Parse derived-table files and join raw inputs against raw outputs."""

from __future__ import annotations

import csv
import heapq
import itertools
import json
import logging
import os
import pickle
import tempfile
from dataclasses import dataclass, field
from typing import IO, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pyarrow as pa
import pyarrow.compute as pc
import pyarrow.csv as pacsv

from .model import (
    RECORD_DTYPE,
    SECONDS_PER_DAY,
    SPENT_SENTINEL,
    InputError,
    IntegrityError,
    OutputRecord,
    SchemaError,
    array_to_records,
    format_timestamp,
    parse_timestamp,
)

log = logging.getLogger(__name__)

DERIVED_COLUMNS = ("value", "block_timestamp", "spent_block_timestamp")
OUTPUT_COLUMNS = ("tx_id", "output_index", "value", "block_timestamp")
INPUT_COLUMNS = ("spent_tx_id", "spent_output_index", "spent_block_timestamp")

MAX_LOGGED_ERRORS = 1000


@dataclass
class ParseStats:
    accepted: int = 0
    rejected: int = 0
    errors: List[Tuple[int, str]] = field(default_factory=list)
    dangling_inputs: int = 0

    def reject(self, line: int, message: str) -> None:
        self.rejected += 1
        if len(self.errors) < MAX_LOGGED_ERRORS:
            self.errors.append((line, message))
        log.warning("line %d rejected: %s", line, message)


@dataclass(frozen=True)
class RawOutput:
    tx_id: str
    output_index: int
    value: int
    block_timestamp: int


@dataclass(frozen=True)
class RawInput:
    spent_tx_id: str
    spent_output_index: int
    spent_block_timestamp: int


def detect_format(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    return "ndjson" if ext in (".ndjson", ".jsonl", ".json") else "csv"


# --- column conversion ---------------------------------------------------------

ISO_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def _as_strings(col) -> pa.Array:
    if isinstance(col, pa.ChunkedArray):
        col = col.combine_chunks()
    if not isinstance(col, pa.Array):
        col = pa.array(list(col), type=pa.string())
    return col.fill_null("")


def _convert_values(col) -> Tuple[np.ndarray, Dict[int, str]]:
    """Return int64 values plus {row: error message} for rows that failed."""
    col = _as_strings(col)
    try:
        out = pc.cast(col, pa.int64()).to_numpy(zero_copy_only=False)
        if len(out) == 0 or out.min() >= 0:
            return out, {}
    except (pa.ArrowInvalid, pa.ArrowNotImplementedError):
        pass
    out = np.zeros(len(col), dtype=np.int64)
    errs: Dict[int, str] = {}
    for i, s in enumerate(col.to_pylist()):
        try:
            v = int(s)
        except (TypeError, ValueError):
            errs[i] = f"bad value {s!r}"
            continue
        if v < 0 or v >= 1 << 63:
            errs[i] = f"value out of range {s!r}"
        else:
            out[i] = v
    return out, errs


def _convert_timestamps(col, nullable: bool) -> Tuple[np.ndarray, Dict[int, str]]:
    """Parse ISO-8601 / epoch-second strings; empty means absent (sentinel) if nullable."""
    col = _as_strings(col)
    n = len(col)
    out = np.full(n, SPENT_SENTINEL, dtype=np.int64)
    errs: Dict[int, str] = {}
    if n == 0:
        return out, errs
    empty = pc.equal(col, "").to_numpy(zero_copy_only=False)
    if not nullable:
        errs.update((int(i), "missing timestamp") for i in np.flatnonzero(empty))
    parsed = pc.strptime(col, format=ISO_FORMAT, unit="s", error_is_null=True)
    secs = parsed.cast(pa.int64()).fill_null(SPENT_SENTINEL).to_numpy(zero_copy_only=False)
    pending = np.flatnonzero(parsed.is_null().to_numpy(zero_copy_only=False) & ~empty)
    ok = ~parsed.is_null().to_numpy(zero_copy_only=False)
    out[ok] = secs[ok]
    if len(pending) > len(col) // 2:
        # probably an epoch-seconds column
        try:
            epoch = pc.cast(col.take(pa.array(pending)), pa.int64()).to_numpy(zero_copy_only=False)
            out[pending] = epoch
            pending = pending[:0]
        except (pa.ArrowInvalid, pa.ArrowNotImplementedError):
            pass
    if len(pending):
        texts = col.take(pa.array(pending)).to_pylist()
        for i, text in zip(pending.tolist(), texts):
            try:
                out[i] = parse_timestamp(text)
            except InputError as exc:
                errs[i] = str(exc)
    return out, errs


def _assemble(values, borns, spents, lines: np.ndarray, stats: ParseStats) -> np.ndarray:
    v, verr = _convert_values(values)
    b, berr = _convert_timestamps(borns, nullable=False)
    s, serr = _convert_timestamps(spents, nullable=True)
    good = np.ones(len(v), dtype=bool)
    errors: Dict[int, str] = {}
    for errs in (serr, berr, verr):  # first column's message wins
        errors.update(errs)
    for i in sorted(errors):
        good[i] = False
        stats.reject(int(lines[i]), errors[i])
    early = good & (s != SPENT_SENTINEL) & (s < b)
    for i in np.flatnonzero(early):
        good[i] = False
        stats.reject(int(lines[i]), f"integrity: spent {s[i]} before born {b[i]}")
    batch = np.empty(int(good.sum()), dtype=RECORD_DTYPE)
    batch["value"] = v[good]
    batch["born"] = b[good]
    batch["spent"] = s[good]
    stats.accepted += len(batch)
    return batch


# --- derived files ---------------------------------------------------------------

def _read_header(path: str) -> List[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise SchemaError("empty file: no header")
    header = [h.strip() for h in header]
    missing = [c for c in DERIVED_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")
    return header


def _csv_batches(path: str, batch_size: int, stats: ParseStats) -> Iterator[np.ndarray]:
    header = _read_header(path)
    ncol = len(header)
    bad_lines: Dict[int, str] = {}

    def on_invalid(row) -> str:
        bad_lines[row.number] = row.text
        if row.text.strip():  # blank lines are skipped silently
            stats.reject(row.number, f"expected {ncol} fields, got {row.actual_columns}")
        return "skip"

    reader = pacsv.open_csv(
        path,
        read_options=pacsv.ReadOptions(block_size=1 << 24, use_threads=False,
                                       column_names=header, skip_rows=1),
        parse_options=pacsv.ParseOptions(invalid_row_handler=on_invalid, ignore_empty_lines=False),
        convert_options=pacsv.ConvertOptions(column_types={c: pa.string() for c in header},
                                             include_columns=list(DERIVED_COLUMNS),
                                             strings_can_be_null=False),
    )
    next_line = 2
    pending: List[pa.RecordBatch] = []
    pending_rows = 0

    def flush() -> Iterator[np.ndarray]:
        nonlocal next_line, pending, pending_rows
        table = pa.Table.from_batches(pending)
        pending, n = [], pending_rows
        pending_rows = 0
        # physical line numbers of the rows pyarrow kept
        skipped = sorted(ln for ln in bad_lines if ln >= next_line)
        span = np.arange(next_line, next_line + n + len(skipped))
        lines = span[~np.isin(span, skipped)][:n]
        next_line = int(lines[-1]) + 1
        for ln in [x for x in bad_lines if x < next_line]:
            del bad_lines[ln]
        cols = [table.column(c) for c in DERIVED_COLUMNS]
        blank = pc.and_(pc.equal(cols[0], ""), pc.and_(pc.equal(cols[1], ""), pc.equal(cols[2], "")))
        keep = pc.invert(blank)
        if not pc.all(keep).as_py():
            cols = [c.filter(keep) for c in cols]
            lines = lines[keep.to_numpy(zero_copy_only=False)]
        yield _assemble(cols[0], cols[1], cols[2], lines, stats)

    for rb in reader:
        if rb.num_rows == 0:
            continue
        pending.append(rb)
        pending_rows += rb.num_rows
        if pending_rows >= batch_size:
            yield from flush()
    if pending_rows:
        yield from flush()


def _ndjson_batches(fh: IO[str], batch_size: int, stats: ParseStats) -> Iterator[np.ndarray]:
    def text(x: object) -> str:
        return "" if x is None else str(x)

    lineno = 0
    checked = False
    while True:
        chunk = list(itertools.islice(fh, batch_size))
        if not chunk:
            if not checked:
                raise SchemaError("empty file: no records")
            return
        values: List[str] = []
        borns: List[str] = []
        spents: List[str] = []
        lines: List[int] = []
        for raw in chunk:
            lineno += 1
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                stats.reject(lineno, f"bad JSON: {exc.msg}")
                continue
            if not isinstance(obj, dict):
                stats.reject(lineno, "not a JSON object")
                continue
            if not checked:
                missing = [c for c in DERIVED_COLUMNS[:2] if c not in obj]
                if missing:
                    raise SchemaError(f"missing field(s): {', '.join(missing)}")
                checked = True
            if "value" not in obj or "block_timestamp" not in obj:
                stats.reject(lineno, "missing field")
                continue
            values.append(text(obj["value"]))
            borns.append(text(obj["block_timestamp"]))
            spents.append(text(obj.get("spent_block_timestamp")))
            lines.append(lineno)
        if values:
            yield _assemble(values, borns, spents, np.array(lines), stats)


def iter_derived_batches(path: str, fmt: Optional[str] = None, batch_size: int = 1_000_000,
                         stats: Optional[ParseStats] = None) -> Iterator[np.ndarray]:
    """Yield structured record arrays (value, born, spent) from a derived-table file.

    Rejected rows are recorded in ``stats`` with their line numbers and skipped.
    """
    fmt = fmt or detect_format(path)
    stats = stats if stats is not None else ParseStats()
    if fmt == "csv":
        yield from _csv_batches(path, batch_size, stats)
    elif fmt == "ndjson":
        with open(path, encoding="utf-8") as fh:
            yield from _ndjson_batches(fh, batch_size, stats)
    else:
        raise InputError(f"unknown format {fmt!r}")


def parse_derived_file(path: str, fmt: Optional[str] = None,
                       stats: Optional[ParseStats] = None) -> Iterator[OutputRecord]:
    for batch in iter_derived_batches(path, fmt, stats=stats):
        yield from array_to_records(batch)


def read_derived(path: str, fmt: Optional[str] = None) -> Tuple[np.ndarray, ParseStats]:
    stats = ParseStats()
    batches = list(iter_derived_batches(path, fmt, stats=stats))
    arr = np.concatenate(batches) if batches else np.empty(0, dtype=RECORD_DTYPE)
    return arr, stats


# --- writing derived files -------------------------------------------------------------

_TIME_OF_DAY: Optional[np.ndarray] = None


def _time_of_day_table() -> np.ndarray:
    """``HH:MM:SSZ`` as a (86400, 9) byte matrix, built once."""
    global _TIME_OF_DAY
    if _TIME_OF_DAY is None:
        s = np.arange(SECONDS_PER_DAY)
        text = [b"%02d:%02d:%02dZ" % t for t in zip((s // 3600).tolist(), (s // 60 % 60).tolist(),
                                                    (s % 60).tolist())]
        _TIME_OF_DAY = np.array(text).view(np.uint8).reshape(SECONDS_PER_DAY, 9)
    return _TIME_OF_DAY


def _iso_column(ts: np.ndarray, absent: Optional[np.ndarray] = None) -> pa.Array:
    """Format epoch seconds as ``YYYY-MM-DDTHH:MM:SSZ`` via per-day and per-second lookup tables."""
    n = len(ts)
    day, sec = np.divmod(ts.astype(np.int64), SECONDS_PER_DAY)
    first = int(day.min()) if n else 0
    span = int(day.max()) - first + 1 if n else 0
    dates = np.datetime_as_string((np.arange(span) + first).astype("datetime64[D]")).astype("S10")
    date_tab = np.empty((span, 11), dtype=np.uint8)
    date_tab[:, :10] = dates.view(np.uint8).reshape(span, 10)
    date_tab[:, 10] = ord("T")
    out = np.empty((n, 20), dtype=np.uint8)
    out[:, :11] = date_tab[day - first]
    out[:, 11:] = _time_of_day_table()[sec]
    validity = None if absent is None else pa.array(~absent).buffers()[1]
    fixed = pa.FixedSizeBinaryArray.from_buffers(pa.binary(20), n, [validity, pa.py_buffer(out)])
    return fixed.cast(pa.string())


def write_derived(records: np.ndarray, path: str, fmt: Optional[str] = None,
                  chunk: int = 1_000_000) -> None:
    """Write records with ISO-8601 timestamps and an empty field for unspent outputs."""
    fmt = fmt or detect_format(path)
    if fmt not in ("csv", "ndjson"):
        raise InputError(f"unknown format {fmt!r}")
    with open(path, "wb") as fh:
        if fmt == "csv":
            fh.write((",".join(DERIVED_COLUMNS) + "\n").encode())
        for start in range(0, len(records), chunk):
            part = records[start:start + chunk]
            unspent = part["spent"] == SPENT_SENTINEL
            table = pa.table({
                "value": pa.array(part["value"]),
                "block_timestamp": _iso_column(part["born"]),
                "spent_block_timestamp": _iso_column(np.where(unspent, 0, part["spent"]), unspent),
            })
            if fmt == "csv":
                pacsv.write_csv(table, fh, pacsv.WriteOptions(include_header=False, quoting_style="none"))
            else:
                for row in table.to_pylist():
                    fh.write((json.dumps(row) + "\n").encode())


def records_to_derived_lines(records: Iterable[OutputRecord]) -> List[str]:
    return [f"{r.value},{format_timestamp(r.born)},{'' if r.spent is None else format_timestamp(r.spent)}"
            for r in records]


# --- raw join --------------------------------------------------------------------------

def _read_csv_rows(path: str, columns: Sequence[str]) -> Iterator[Tuple[int, List[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        missing = [c for c in columns if c not in header]
        if missing:
            raise SchemaError(f"{os.path.basename(path)}: missing column(s): {', '.join(missing)}")
        pos = [header.index(c) for c in columns]
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, [row[p] for p in pos]


def iter_raw_outputs(path: str) -> Iterator[RawOutput]:
    for line, (tx, idx, value, ts) in _read_csv_rows(path, OUTPUT_COLUMNS):
        try:
            yield RawOutput(tx, int(idx), int(value), parse_timestamp(ts))
        except ValueError as exc:
            raise InputError(f"{path}:{line}: {exc}") from exc


def iter_raw_inputs(path: str) -> Iterator[RawInput]:
    for line, (tx, idx, ts) in _read_csv_rows(path, INPUT_COLUMNS):
        try:
            yield RawInput(tx, int(idx), parse_timestamp(ts))
        except ValueError as exc:
            raise InputError(f"{path}:{line}: {exc}") from exc


def _external_sort(items: Iterable[tuple], run_size: int, tmpdir: Optional[str]) -> Iterator[tuple]:
    """Sort tuples by natural order using sorted runs spilled to temp files."""
    runs: List[IO[bytes]] = []
    it = iter(items)
    first = sorted(itertools.islice(it, run_size))
    nxt = sorted(itertools.islice(it, run_size))
    if not nxt:
        yield from first
        return

    def spill(buf: List[tuple]) -> None:
        f = tempfile.TemporaryFile(dir=tmpdir)
        for start in range(0, len(buf), 10_000):
            pickle.dump(buf[start:start + 10_000], f, protocol=pickle.HIGHEST_PROTOCOL)
        f.seek(0)
        runs.append(f)

    def load(f: IO[bytes]) -> Iterator[tuple]:
        while True:
            try:
                yield from pickle.load(f)
            except EOFError:
                return

    spill(first)
    spill(nxt)
    while True:
        buf = sorted(itertools.islice(it, run_size))
        if not buf:
            break
        spill(buf)
    try:
        yield from heapq.merge(*(load(f) for f in runs))
    finally:
        for f in runs:
            f.close()


def join_inputs_outputs(outputs: Iterable[RawOutput], inputs: Iterable[RawInput],
                        stats: Optional[ParseStats] = None, run_size: int = 500_000,
                        tmpdir: Optional[str] = None) -> Iterator[OutputRecord]:
    """Merge-join outputs with the inputs that spend them, in outpoint order.

    Both streams are externally sorted by (tx_id, output_index), so the result
    does not depend on file order and datasets larger than memory are fine.
    """
    stats = stats if stats is not None else ParseStats()
    outs = _external_sort(((o.tx_id, o.output_index, o.value, o.block_timestamp) for o in outputs),
                          run_size, tmpdir)
    ins = _external_sort(((i.spent_tx_id, i.spent_output_index, i.spent_block_timestamp) for i in inputs),
                         run_size, tmpdir)
    pending = next(ins, None)
    prev_out: Optional[Tuple[str, int]] = None
    for tx, idx, value, born in outs:
        key = (tx, idx)
        if key == prev_out:
            raise IntegrityError(f"duplicate output {tx}:{idx}")
        prev_out = key
        while pending is not None and pending[:2] < key:
            stats.dangling_inputs += 1
            pending = next(ins, None)
        spent = None
        if pending is not None and pending[:2] == key:
            spent = pending[2]
            pending = next(ins, None)
            if pending is not None and pending[:2] == key:
                raise IntegrityError(f"output {tx}:{idx} spent more than once")
        if spent is not None and spent < born:
            stats.reject(0, f"integrity: output {tx}:{idx} spent before it was created")
            continue
        if value < 0:
            stats.reject(0, f"output {tx}:{idx} has negative value")
            continue
        stats.accepted += 1
        yield OutputRecord(value, born, spent)
    while pending is not None:
        stats.dangling_inputs += 1
        pending = next(ins, None)
    if stats.dangling_inputs:
        log.warning("%d input(s) reference no known output", stats.dangling_inputs)


def batched(records: Iterable[OutputRecord], size: int = 1_000_000) -> Iterator[np.ndarray]:
    it = iter(records)
    while True:
        chunk = list(itertools.islice(it, size))
        if not chunk:
            return
        arr = np.empty(len(chunk), dtype=RECORD_DTYPE)
        arr["value"] = [r.value for r in chunk]
        arr["born"] = [r.born for r in chunk]
        arr["spent"] = [SPENT_SENTINEL if r.spent is None else r.spent for r in chunk]
        yield arr
