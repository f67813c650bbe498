"""On-disk record store partitioned twice: by birth date and by spend date.

Layout::

    root/manifest.json
    root/birth/<YYYY-MM-DD>.seg
    root/death/<YYYY-MM-DD>.seg

Segments are packed little-endian ``(value u64, born i64, spent i64)``
records, sorted, one file per day per family.  Every day from genesis to the
last complete day has a file in both families, empty days included.
"""

from __future__ import annotations

import contextlib
import datetime as dt
import hashlib
import json
import logging
import os
import shutil
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .model import (
    RECORD_DTYPE,
    SECONDS_PER_DAY,
    SPENT_SENTINEL,
    CohortError,
    InputError,
    IntegrityError,
    OutputRecord,
    SequencingError,
    array_to_records,
    date_of,
    midnight_epoch,
    parse_date,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
FAMILIES = ("birth", "death")
DEFAULT_CHUNK_DAYS = 180


class StoreLockedError(CohortError):
    pass


@contextlib.contextmanager
def writer_lock(root: str) -> Iterator[None]:
    """Single-writer lock: a sibling ``<root>.lock`` file created exclusively."""
    path = os.path.abspath(root).rstrip(os.sep) + ".lock"
    os.makedirs(os.path.dirname(path), exist_ok=True)
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise StoreLockedError(f"store {root} is locked by another writer ({path})") from exc
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(path)


def _sort_family(arr: np.ndarray, family: str) -> np.ndarray:
    if family == "birth":
        order = np.lexsort((arr["value"], arr["spent"], arr["born"]))
    else:
        order = np.lexsort((arr["value"], arr["born"], arr["spent"]))
    return arr[order]


def _write_segment(path: str, arr: np.ndarray) -> str:
    data = np.ascontiguousarray(arr, dtype=RECORD_DTYPE).tobytes()
    tmp = path + ".part"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return hashlib.sha256(data).hexdigest()


def _write_json(path: str, obj: dict) -> None:
    tmp = path + ".part"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


class PartitionStore:
    """Handle on an opened store.  Readers may share one instance freely."""

    def __init__(self, root: str, manifest: dict) -> None:
        self.root = root
        self.manifest = manifest
        self.genesis = parse_date(manifest["genesis"])
        self._origin = midnight_epoch(self.genesis)
        self._verified: Dict[str, Tuple[int, int]] = {}

    # --- construction ---------------------------------------------------------------

    @classmethod
    def build(cls, batches: Iterable[np.ndarray], genesis: dt.date, root: str,
              end_day: Optional[int] = None) -> "PartitionStore":
        """Partition record batches into a fresh store at ``root``.

        ``end_day`` fixes the last complete day; by default it is the latest day
        seen in any birth or spend timestamp.  With an explicit horizon, spends
        after it are treated as unknown and births after it are dropped.
        Identical input always produces byte-identical segments and manifest.
        """
        root = os.path.abspath(root)
        tmp = root + f".tmp-{os.getpid()}"
        with writer_lock(root):
            shutil.rmtree(tmp, ignore_errors=True)
            try:
                manifest = cls._build_into(tmp, batches, genesis, end_day)
                if os.path.exists(root):
                    if os.listdir(root) and not os.path.exists(os.path.join(root, "manifest.json")):
                        raise InputError(f"{root} exists and is not a partition store")
                    shutil.rmtree(root)
                os.replace(tmp, root)
            except BaseException:
                shutil.rmtree(tmp, ignore_errors=True)
                raise
        return cls(root, manifest)

    @classmethod
    def create_empty(cls, root: str, genesis: dt.date) -> "PartitionStore":
        """A store with no days yet; the first ``append_day`` writes genesis day."""
        return cls.build([], genesis, root, end_day=-1)

    @classmethod
    def _build_into(cls, tmp: str, batches: Iterable[np.ndarray], genesis: dt.date,
                    end_day: Optional[int]) -> dict:
        origin = midnight_epoch(genesis)
        stage = os.path.join(tmp, "stage")
        for fam in FAMILIES:
            os.makedirs(os.path.join(stage, fam))
            os.makedirs(os.path.join(tmp, fam))
        max_day = -1
        for batch in batches:
            if len(batch) == 0:
                continue
            if int(batch["born"].min()) < origin:
                raise InputError(f"record born before genesis {genesis.isoformat()}")
            bday = (batch["born"] - origin) // SECONDS_PER_DAY
            spent = batch["spent"] != SPENT_SENTINEL
            dday = (batch["spent"][spent] - origin) // SECONDS_PER_DAY
            max_day = max(max_day, int(bday.max()), int(dday.max()) if len(dday) else -1)
            cls._stage(os.path.join(stage, "birth"), batch, bday)
            cls._stage(os.path.join(stage, "death"), batch[spent], dday)
        last = max_day if end_day is None else end_day
        horizon = origin + (last + 1) * SECONDS_PER_DAY
        manifest: dict = {
            "format": FORMAT_VERSION,
            "genesis": genesis.isoformat(),
            "last_day": last,
            "last_date": date_of(last, genesis).isoformat() if last >= 0 else None,
            "record_dtype": [list(f) for f in RECORD_DTYPE.descr],
            "spent_sentinel": int(SPENT_SENTINEL),
            "birth": {},
            "death": {},
        }
        dropped = 0
        for fam in FAMILIES:
            staged = set(os.listdir(os.path.join(stage, fam)))
            for name in sorted(staged):
                if int(name.split(".")[0]) > last:
                    if fam == "birth":
                        dropped += os.path.getsize(os.path.join(stage, fam, name)) // RECORD_DTYPE.itemsize
            for d in range(last + 1):
                name = f"{d}.bin"
                if name in staged:
                    arr = np.fromfile(os.path.join(stage, fam, name), dtype=RECORD_DTYPE)
                    if fam == "birth":
                        arr["spent"][arr["spent"] >= horizon] = SPENT_SENTINEL
                    arr = _sort_family(arr, fam)
                else:
                    arr = np.empty(0, dtype=RECORD_DTYPE)
                key = date_of(d, genesis).isoformat()
                digest = _write_segment(os.path.join(tmp, fam, key + ".seg"), arr)
                manifest[fam][key] = {"count": len(arr), "sha256": digest}
        if dropped:
            log.warning("%d record(s) born after the last day were dropped", dropped)
        shutil.rmtree(stage)
        cls._finish_manifest(manifest)
        _write_json(os.path.join(tmp, "manifest.json"), manifest)
        return manifest

    @staticmethod
    def _stage(directory: str, batch: np.ndarray, days: np.ndarray) -> None:
        if len(batch) == 0:
            return
        order = np.argsort(days, kind="stable")
        days = days[order]
        batch = batch[order]
        cuts = np.flatnonzero(np.diff(days)) + 1
        starts = np.concatenate(([0], cuts))
        ends = np.concatenate((cuts, [len(days)]))
        for s, e in zip(starts.tolist(), ends.tolist()):
            with open(os.path.join(directory, f"{int(days[s])}.bin"), "ab") as fh:
                fh.write(batch[s:e].tobytes())

    @staticmethod
    def _finish_manifest(manifest: dict) -> None:
        manifest["total_records"] = sum(e["count"] for e in manifest["birth"].values())
        manifest["spent_records"] = sum(e["count"] for e in manifest["death"].values())

    @classmethod
    def open(cls, root: str, verify: bool = True) -> "PartitionStore":
        path = os.path.join(root, "manifest.json")
        try:
            with open(path, encoding="utf-8") as fh:
                manifest = json.load(fh)
        except FileNotFoundError as exc:
            raise InputError(f"no partition store at {root}") from exc
        if manifest.get("format") != FORMAT_VERSION:
            raise IntegrityError(f"unsupported store format {manifest.get('format')!r}")
        store = cls(root, manifest)
        store.check(full=verify)
        return store

    # --- integrity ------------------------------------------------------------------

    def _seg_path(self, family: str, key: str) -> str:
        return os.path.join(self.root, family, key + ".seg")

    def check(self, full: bool = True) -> None:
        """Reconcile files against the manifest; ``full`` also re-hashes every segment."""
        for fam in FAMILIES:
            entries = self.manifest[fam]
            if len(entries) != self.last_day + 1:
                raise IntegrityError(f"{fam}: {len(entries)} partitions for {self.last_day + 1} days")
            for key, entry in entries.items():
                path = self._seg_path(fam, key)
                try:
                    size = os.path.getsize(path)
                except FileNotFoundError as exc:
                    raise IntegrityError(f"missing segment {fam}/{key}") from exc
                if size != entry["count"] * RECORD_DTYPE.itemsize:
                    raise IntegrityError(f"segment {fam}/{key} size does not match manifest")
                if full:
                    self._load(fam, key)
        total = sum(e["count"] for e in self.manifest["birth"].values())
        if total != self.manifest["total_records"]:
            raise IntegrityError("manifest record count does not reconcile")

    def _load(self, family: str, key: str) -> np.ndarray:
        entry = self.manifest[family].get(key)
        if entry is None:
            return np.empty(0, dtype=RECORD_DTYPE)
        path = self._seg_path(family, key)
        st = os.stat(path)
        stamp = (st.st_mtime_ns, st.st_size)
        with open(path, "rb") as fh:
            data = fh.read()
        if self._verified.get(path) != stamp:
            if hashlib.sha256(data).hexdigest() != entry["sha256"]:
                raise IntegrityError(f"checksum mismatch in segment {family}/{key}")
            self._verified[path] = stamp
        return np.frombuffer(data, dtype=RECORD_DTYPE)

    # --- queries --------------------------------------------------------------------

    @property
    def last_day(self) -> int:
        return int(self.manifest["last_day"])

    @property
    def total_records(self) -> int:
        return int(self.manifest["total_records"])

    def key(self, day: int) -> str:
        return date_of(day, self.genesis).isoformat()

    def end_of(self, day: int) -> int:
        return self._origin + (int(day) + 1) * SECONDS_PER_DAY

    def _check_day(self, day: int) -> None:
        if not 0 <= day <= self.last_day:
            raise InputError(f"day {day} outside store range 0..{self.last_day}")

    def partition_count(self, family: str, day: int) -> int:
        return int(self.manifest[family][self.key(day)]["count"])

    def birth_array(self, day: int) -> np.ndarray:
        self._check_day(day)
        return self._load("birth", self.key(day))

    def death_array(self, day: int) -> np.ndarray:
        self._check_day(day)
        return self._load("death", self.key(day))

    def birth_cohort(self, day: int) -> Iterator[OutputRecord]:
        """Records born on ``day``."""
        return array_to_records(self.birth_array(day))

    def death_cohort(self, day: int) -> Iterator[OutputRecord]:
        """Records spent on ``day``."""
        return array_to_records(self.death_array(day))

    def scan_alive_window(self, start: int, end: int) -> np.ndarray:
        """Every record born by the end of ``end`` and still unspent at the end of ``start``.

        This superset is enough to derive the age distribution of each day in
        the window; it reads birth partitions only.
        """
        if start > end:
            raise InputError(f"inverted window [{start}, {end}]")
        self._check_day(start)
        self._check_day(end)
        cutoff = self.end_of(start)
        parts = []
        for d in range(end + 1):
            seg = self.birth_array(d)
            parts.append(seg[seg["spent"] >= cutoff])
        return np.concatenate(parts) if parts else np.empty(0, dtype=RECORD_DTYPE)

    def iter_alive_windows(self, windows: Sequence[Tuple[int, int]]) -> Iterator[np.ndarray]:
        """Same arrays as ``scan_alive_window`` for ascending contiguous windows.

        Carries the live set forward so each birth partition is read once.
        """
        carry = np.empty(0, dtype=RECORD_DTYPE)
        read_through = -1
        for start, end in windows:
            if start > end:
                raise InputError(f"inverted window [{start}, {end}]")
            self._check_day(end)
            fresh = [self.birth_array(d) for d in range(read_through + 1, end + 1)]
            read_through = end
            carry = np.concatenate([carry] + fresh) if fresh else carry
            carry = carry[carry["spent"] >= self.end_of(start)]
            yield carry

    # --- incremental append -------------------------------------------------------------

    def append_day(self, batch: np.ndarray, day: Optional[int] = None) -> dict:
        """Add the next day: outputs born on it plus spends of earlier unspent outputs.

        A spend is given as the full record (value, born, spent); it is matched
        to an unspent stored record with the same value and birth timestamp.
        Such records are interchangeable for every statistic, so any match is
        as good as another.
        """
        new_day = self.last_day + 1
        if day is not None and day != new_day:
            raise SequencingError(f"next day is {new_day} ({self.key(new_day)}), got {day}")
        batch = np.asarray(batch, dtype=RECORD_DTYPE)
        start, end = self.end_of(new_day - 1), self.end_of(new_day)
        born, spent = batch["born"], batch["spent"]
        has_spend = spent != SPENT_SENTINEL
        if len(batch):
            if int(born.max()) >= end or int(spent[has_spend].max(initial=start)) >= end:
                raise SequencingError(f"records beyond {self.key(new_day)}: days may not be skipped")
            if int(born.min()) < self._origin:
                raise InputError("record born before genesis")
            if bool(np.any(has_spend & (spent < born))):
                raise IntegrityError("record spent before it was born")
        births = batch[born >= start]
        spends = batch[born < start]
        if np.any(spends["spent"] == SPENT_SENTINEL):
            raise IntegrityError("record for an earlier day carries no spend on the new day")
        if np.any(spends["spent"] < start):
            raise SequencingError("spend timestamp precedes the new day")

        with writer_lock(self.root):
            manifest = json.loads(json.dumps(self.manifest))
            updated: Dict[str, np.ndarray] = {}
            sdays = (spends["born"] - self._origin) // SECONDS_PER_DAY
            for d in np.unique(sdays).tolist():
                key = self.key(d)
                seg = np.array(self._load("birth", key))
                todo = spends[sdays == d]
                for value, b, s in todo.tolist():
                    hits = np.flatnonzero((seg["value"] == value) & (seg["born"] == b)
                                          & (seg["spent"] == SPENT_SENTINEL))
                    if len(hits) == 0:
                        raise IntegrityError(
                            f"spend of unknown or already spent output (value={value}, born={b})")
                    seg["spent"][hits[0]] = s
                updated[key] = _sort_family(seg, "birth")
            new_key = self.key(new_day)
            dead_today = np.concatenate([spends, births[births["spent"] != SPENT_SENTINEL]])
            writes = [("birth", k, a) for k, a in sorted(updated.items())]
            writes.append(("birth", new_key, _sort_family(births, "birth")))
            writes.append(("death", new_key, _sort_family(dead_today, "death")))
            for fam, key, arr in writes:
                digest = _write_segment(self._seg_path(fam, key), arr)
                manifest[fam][key] = {"count": len(arr), "sha256": digest}
            manifest["last_day"] = new_day
            manifest["last_date"] = new_key
            self._finish_manifest(manifest)
            _write_json(os.path.join(self.root, "manifest.json"), manifest)
            self.manifest = manifest
        return manifest


def split_by_day(records: np.ndarray, genesis: dt.date, day: int) -> np.ndarray:
    """The append batch for ``day`` cut from a complete record set.

    Contains outputs born that day (with spends beyond the day hidden) and
    earlier outputs spent that day.
    """
    origin = midnight_epoch(genesis)
    start = origin + day * SECONDS_PER_DAY
    end = start + SECONDS_PER_DAY
    born, spent = records["born"], records["spent"]
    births = records[(born >= start) & (born < end)].copy()
    births["spent"][births["spent"] >= end] = SPENT_SENTINEL
    spends = records[(born < start) & (spent >= start) & (spent < end)]
    return np.concatenate([births, spends])


def chunk_windows(first: int, last: int, chunk_days: int) -> List[Tuple[int, int]]:
    if chunk_days < 1:
        raise InputError("chunk size must be at least one day")
    return [(s, min(s + chunk_days - 1, last)) for s in range(first, last + 1, chunk_days)]
