from .records import (
    FIELD_ORDER, FLUSH_REASONS, KINDS, LOCATION_MODES, Batch, LogRecord, QueryFilter,
    RecordError, content_digest, read_ndjson, write_ndjson,
)
from .store import DATA_DIR_ENV, BatchConflict, DuplicateSeq, LogStore, StoreError, StoreFull
from .transport import BATCH_SIZE, FLUSH_INTERVAL_MS, LogQueue, Transport, flush_policy

__all__ = [
    "FIELD_ORDER", "FLUSH_REASONS", "KINDS", "LOCATION_MODES", "Batch", "LogRecord",
    "QueryFilter", "RecordError", "content_digest", "read_ndjson", "write_ndjson", "DATA_DIR_ENV", "BatchConflict",
    "DuplicateSeq", "LogStore", "StoreError", "StoreFull", "BATCH_SIZE",
    "FLUSH_INTERVAL_MS", "LogQueue", "Transport", "flush_policy",
]
