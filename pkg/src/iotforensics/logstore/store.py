"""Append-only NDJSON log store with a sidecar index rebuilt on open."""
from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from .records import Batch, LogRecord, QueryFilter, RecordError, content_digest

DATA_FILE = "records.ndjson"
INDEX_FILE = "records.idx.json"
DATA_DIR_ENV = "IOTFORENSICS_DATA_DIR"


class StoreError(Exception):
    pass


class DuplicateSeq(StoreError):
    def __init__(self, app_id: str, seq: int) -> None:
        super().__init__(f"record ({app_id}, {seq}) already stored")
        self.app_id = app_id
        self.seq = seq


class StoreFull(StoreError):
    """Raised when the underlying file cannot be written."""


class BatchConflict(StoreError):
    def __init__(self, batch_id: str) -> None:
        super().__init__(f"batch {batch_id!r} was already stored with different content")
        self.batch_id = batch_id


class LogStore:
    """One writer, many readers. ``path=None`` keeps everything in memory."""

    def __init__(self, path: str | os.PathLike | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._records: list[LogRecord] = []
        self._keys: set[tuple[str, int]] = set()
        self._last_seq: dict[str, int] = {}
        self._batches: dict[str, list[LogRecord]] = {}
        self._fh = None
        if self.path is not None:
            self.path.mkdir(parents=True, exist_ok=True)
            self._load()
            self._fh = open(self.data_file, "a", encoding="utf-8")

    @classmethod
    def from_env(cls, default: str | None = None) -> LogStore:
        return cls(os.environ.get(DATA_DIR_ENV, default))

    @property
    def data_file(self) -> Path:
        assert self.path is not None
        return self.path / DATA_FILE

    def _load(self) -> None:
        if not self.data_file.exists():
            return
        with open(self.data_file, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = LogRecord.from_dict(json.loads(line))
                except (ValueError, RecordError) as exc:
                    # a torn final line after a crash is dropped, anything else is corruption
                    if fh.readline() == "":
                        break
                    raise StoreError(f"{self.data_file}:{lineno}: {exc}") from None
                self._index(rec)
        self._write_index()

    def _index(self, rec: LogRecord) -> None:
        self._records.append(rec)
        self._keys.add(rec.key)
        self._last_seq[rec.app_id] = max(self._last_seq.get(rec.app_id, rec.seq), rec.seq)
        if rec.batch_id:
            self._batches.setdefault(rec.batch_id, []).append(rec)

    def _write_index(self) -> None:
        if self.path is None:
            return
        index = {
            "records": len(self._records),
            "last_seq": self._last_seq,
            "batches": {b: content_digest(rs) for b, rs in self._batches.items()},
        }
        tmp = self.path / (INDEX_FILE + ".tmp")
        tmp.write_text(json.dumps(index, sort_keys=True))
        os.replace(tmp, self.path / INDEX_FILE)

    def _write(self, recs: list[LogRecord]) -> None:
        if self._fh is None:
            return
        try:
            self._fh.write("".join(r.to_json() + "\n" for r in recs))
            self._fh.flush()
        except OSError as exc:
            raise StoreFull(str(exc)) from exc

    def append(self, record: LogRecord) -> int:
        """Store one record; returns the new record count."""
        with self._lock:
            if record.key in self._keys:
                raise DuplicateSeq(*record.key)
            self._write([record])
            self._index(record)
            return len(self._records)

    def append_batch(self, batch: Batch) -> bool:
        """Store a batch. Returns False if the same batch was already stored."""
        records = [r if r.batch_id == batch.batch_id else r.with_batch(batch.batch_id)
                   for r in batch.records]
        with self._lock:
            prior = self._batches.get(batch.batch_id)
            if prior is not None:
                if content_digest(prior) != content_digest(records):
                    raise BatchConflict(batch.batch_id)
                return False
            seen = set()
            for r in records:
                if r.key in self._keys or r.key in seen:
                    raise DuplicateSeq(*r.key)
                seen.add(r.key)
            self._write(records)
            for r in records:
                self._index(r)
            return True

    def flush(self) -> None:
        """Make everything appended so far durable."""
        with self._lock:
            if self._fh is not None:
                try:
                    self._fh.flush()
                    os.fsync(self._fh.fileno())
                except OSError as exc:
                    raise StoreFull(str(exc)) from exc
                self._write_index()

    def close(self) -> None:
        if self._fh is not None:
            self.flush()
            self._fh.close()
            self._fh = None

    def __enter__(self) -> LogStore:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __len__(self) -> int:
        return len(self._records)

    def query(self, filt: QueryFilter | None = None) -> list[LogRecord]:
        with self._lock:
            snapshot = list(self._records)
        if filt is not None:
            snapshot = [r for r in snapshot if filt.matches(r)]
        return sorted(snapshot, key=lambda r: r.sort_key)

    def keys(self) -> set[tuple[str, int]]:
        with self._lock:
            return set(self._keys)
