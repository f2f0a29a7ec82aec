from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

KINDS = ("Event", "Action", "UserInput", "DeviceInfo", "TimeLocation", "SinkInternet", "SinkMessage")
LOCATION_MODES = ("Office", "Other")

# on-disk field order, one JSON object per line
FIELD_ORDER = ("ts", "app_id", "seq", "kind", "device_id", "attribute", "value",
               "location_mode", "controller_id", "batch_id")


class RecordError(ValueError):
    pass


@dataclass(frozen=True)
class LogRecord:
    ts: int
    app_id: str
    seq: int
    kind: str
    device_id: str | None = None
    attribute: str | None = None
    value: str | int | float | None = None
    location_mode: str = "Office"
    controller_id: str | None = None
    batch_id: str = ""

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise RecordError(f"unknown record kind {self.kind!r}")
        if self.location_mode not in LOCATION_MODES:
            raise RecordError(f"unknown location mode {self.location_mode!r}")
        if not isinstance(self.ts, int) or isinstance(self.ts, bool) or self.ts < 0:
            raise RecordError(f"bad timestamp {self.ts!r}")
        if not isinstance(self.seq, int) or isinstance(self.seq, bool):
            raise RecordError(f"bad sequence number {self.seq!r}")
        if not self.app_id:
            raise RecordError("app_id is required")

    @property
    def key(self) -> tuple[str, int]:
        return self.app_id, self.seq

    @property
    def sort_key(self) -> tuple[int, str, int]:
        return self.ts, self.app_id, self.seq

    def with_batch(self, batch_id: str) -> LogRecord:
        return replace(self, batch_id=batch_id)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in FIELD_ORDER}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> LogRecord:
        unknown = set(d) - set(FIELD_ORDER)
        if unknown:
            raise RecordError(f"unknown record fields {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise RecordError(str(exc)) from None


FLUSH_REASONS = ("size", "interval", "shutdown")


@dataclass(frozen=True)
class Batch:
    batch_id: str
    records: tuple[LogRecord, ...]
    flush_reason: str = "size"
    sent_at: int = 0

    def to_dict(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "flush_reason": self.flush_reason,
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Batch:
        if not isinstance(d, dict) or not isinstance(d.get("batch_id"), str) or not d["batch_id"]:
            raise RecordError("batch document needs a non-empty batch_id")
        recs = d.get("records")
        if not isinstance(recs, list):
            raise RecordError("batch document needs a records list")
        reason = d.get("flush_reason", "size")
        if reason not in FLUSH_REASONS:
            raise RecordError(f"unknown flush reason {reason!r}")
        records = []
        for r in recs:
            if not isinstance(r, dict):
                raise RecordError("records must be objects")
            r = dict(r)
            r.setdefault("batch_id", d["batch_id"])
            if r["batch_id"] != d["batch_id"]:
                raise RecordError("record batch_id differs from the batch")
            records.append(LogRecord.from_dict(r))
        return cls(d["batch_id"], tuple(records), reason)


def content_digest(records) -> str:
    h = hashlib.sha256()
    for r in records:
        h.update(r.to_json().encode())
        h.update(b"\n")
    return h.hexdigest()


@dataclass
class QueryFilter:
    ts_from: int | None = None
    ts_to: int | None = None  # exclusive
    device_ids: set[str] = field(default_factory=set)
    kinds: set[str] = field(default_factory=set)
    app_ids: set[str] = field(default_factory=set)
    location_mode: str | None = None

    def matches(self, r: LogRecord) -> bool:
        if self.ts_from is not None and r.ts < self.ts_from:
            return False
        if self.ts_to is not None and r.ts >= self.ts_to:
            return False
        if self.device_ids and r.device_id not in self.device_ids:
            return False
        if self.kinds and r.kind not in self.kinds:
            return False
        if self.app_ids and r.app_id not in self.app_ids:
            return False
        if self.location_mode is not None and r.location_mode != self.location_mode:
            return False
        return True


def write_ndjson(records, fh) -> int:
    n = 0
    for r in records:
        fh.write(r.to_json() + "\n")
        n += 1
    return n


def read_ndjson(path) -> list[LogRecord]:
    """Records from a newline-delimited file; blank lines are skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(LogRecord.from_dict(json.loads(line)))
            except (ValueError, RecordError) as exc:
                raise RecordError(f"{path}:{lineno}: {exc}") from None
    return out
