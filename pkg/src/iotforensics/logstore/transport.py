"""Batched log transport: queue records and flush by size or age."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .records import Batch, LogRecord

BATCH_SIZE = 10
FLUSH_INTERVAL_MS = 500


@dataclass
class LogQueue:
    records: deque = field(default_factory=deque)
    enqueued_at: deque = field(default_factory=deque)

    def push(self, record: LogRecord, now: int) -> None:
        self.records.append(record)
        self.enqueued_at.append(now)

    def take(self, n: int) -> list[LogRecord]:
        out = []
        for _ in range(min(n, len(self.records))):
            out.append(self.records.popleft())
            self.enqueued_at.popleft()
        return out

    def oldest(self) -> int | None:
        return self.enqueued_at[0] if self.enqueued_at else None

    def __len__(self) -> int:
        return len(self.records)


def flush_reason(queue: LogQueue, now: int, size: int = BATCH_SIZE,
                 interval_ms: int = FLUSH_INTERVAL_MS) -> str | None:
    if len(queue) >= size:
        return "size"
    oldest = queue.oldest()
    if oldest is not None and now - oldest >= interval_ms:
        return "interval"
    return None


def flush_policy(queue: LogQueue, now: int, size: int = BATCH_SIZE,
                 interval_ms: int = FLUSH_INTERVAL_MS, batch_id: str = "") -> Batch | None:
    reason = flush_reason(queue, now, size, interval_ms)
    if reason is None:
        return None
    records = queue.take(size)
    return Batch(batch_id, tuple(r.with_batch(batch_id) for r in records), reason, now)


class Transport:
    """Per-app sender. ``sink`` receives each flushed batch (one request each)."""

    def __init__(self, app_id: str, sink: Callable[[Batch], object],
                 size: int = BATCH_SIZE, interval_ms: int = FLUSH_INTERVAL_MS) -> None:
        self.app_id = app_id
        self.sink = sink
        self.size = size
        self.interval_ms = interval_ms
        self.queue = LogQueue()
        self.requests = 0
        self.batches: list[Batch] = []

    def _next_id(self) -> str:
        return f"{self.app_id}#{self.requests + 1}"

    def _emit(self, batch: Batch) -> None:
        self.requests += 1
        self.batches.append(batch)
        self.sink(batch)

    def tick(self, now: int) -> None:
        while True:
            batch = flush_policy(self.queue, now, self.size, self.interval_ms, self._next_id())
            if batch is None:
                return
            self._emit(batch)

    def send(self, record: LogRecord, now: int) -> None:
        self.tick(now)
        self.queue.push(record, now)
        self.tick(now)

    def next_deadline(self) -> int | None:
        oldest = self.queue.oldest()
        return None if oldest is None else oldest + self.interval_ms

    def close(self, now: int) -> None:
        self.tick(now)
        while len(self.queue):
            bid = self._next_id()
            recs = self.queue.take(self.size)
            self._emit(Batch(bid, tuple(r.with_batch(bid) for r in recs), "shutdown", now))
