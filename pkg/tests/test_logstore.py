from __future__ import annotations

import math
import random

import pytest
from fastapi.testclient import TestClient

from iotforensics.logstore import (
    KINDS, Batch, BatchConflict, DuplicateSeq, LogQueue, LogRecord, LogStore, QueryFilter, RecordError,
    Transport, flush_policy, read_ndjson, write_ndjson,
)
from iotforensics.logstore.service import HttpSink, create_app


def rec(app="A", seq=1, ts=None, kind="Event", device="d1", mode="Office", batch=""):
    return LogRecord(ts if ts is not None else seq * 10, app, seq, kind, device, "switch", "on", mode, None, batch)


def random_records(n: int, seed: int) -> list[LogRecord]:
    rng = random.Random(seed)
    seqs: dict[str, int] = {}
    clock: dict[str, int] = {}
    out = []
    for _ in range(n):
        app = rng.choice(["a1", "a2", "a3", "a4"])
        seqs[app] = seqs.get(app, 0) + 1
        clock[app] = clock.get(app, 0) + rng.randrange(0, 5000)
        out.append(LogRecord(clock[app], app, seqs[app], rng.choice(KINDS), rng.choice([None, "d1", "d2", "d3"]),
                             None, rng.randrange(100), rng.choice(["Office", "Other"])))
    return out


def test_two_records_come_back_in_order():
    s = LogStore()
    s.append(rec(seq=1))
    s.append(rec(seq=2))
    assert [r.seq for r in s.query()] == [1, 2]


def test_duplicate_key_rejected():
    s = LogStore()
    s.append(rec(seq=1))
    with pytest.raises(DuplicateSeq):
        s.append(rec(seq=1, ts=99))


def test_ten_thousand_appends_count_and_per_app_order():
    s = LogStore()
    records = random_records(10_000, 1)
    for r in records:
        s.append(r)
    got = s.query()
    assert len(got) == 10_000
    for app in {r.app_id for r in records}:
        seqs = [r.seq for r in got if r.app_id == app]
        assert seqs == sorted(seqs)


def test_record_validation():
    with pytest.raises(RecordError):
        rec(kind="Nope")
    with pytest.raises(RecordError):
        rec(mode="Home")
    with pytest.raises(RecordError):
        LogRecord(-1, "a", 1, "Event")


def test_size_flush():
    q = LogQueue()
    for i in range(10):
        q.push(rec(seq=i + 1), 0)
    batch = flush_policy(q, 0)
    assert batch is not None and len(batch.records) == 10 and batch.flush_reason == "size"
    assert len(q) == 0


def test_interval_flush():
    q = LogQueue()
    q.push(rec(), 0)
    assert flush_policy(q, 499) is None
    batch = flush_policy(q, 500)
    assert batch is not None and len(batch.records) == 1 and batch.flush_reason == "interval"


def _stepped_flushes(times: list[int], size: int, interval: int) -> int:
    """Independent step-through: walk every millisecond and count flushes."""
    pending: list[int] = []
    flushes = 0
    i = 0
    end = times[-1] + interval + 1
    for now in range(end + 1):
        while pending and (len(pending) >= size or now - pending[0] >= interval):
            del pending[:size]
            flushes += 1
        while i < len(times) and times[i] == now:
            pending.append(now)
            i += 1
            if len(pending) >= size:
                del pending[:size]
                flushes += 1
    return flushes + math.ceil(len(pending) / size)


def _run_transport(times: list[int], size: int = 10, interval: int = 500) -> Transport:
    sent: list[Batch] = []
    t = Transport("app", sent.append, size, interval)
    for k, now in enumerate(times):
        deadline = t.next_deadline()
        while deadline is not None and deadline <= now:
            t.tick(deadline)
            deadline = t.next_deadline()
        t.send(rec(seq=k + 1, ts=now), now)
    deadline = t.next_deadline()
    while deadline is not None:
        t.tick(deadline)
        deadline = t.next_deadline()
    return t


@pytest.mark.parametrize("seed", range(5))
def test_request_count_matches_step_oracle(seed):
    rng = random.Random(seed)
    times = sorted(rng.randrange(0, 4_000) for _ in range(rng.randrange(1, 120)))
    t = _run_transport(times)
    assert t.requests == _stepped_flushes(times, 10, 500)
    idle = sum(1 for b in t.batches if b.flush_reason == "interval")
    assert t.requests <= math.ceil(len(times) / 10) + idle
    sent = [r.seq for b in t.batches for r in b.records]
    assert sent == list(range(1, len(times) + 1))


def test_batching_keeps_app_order_and_size_cap():
    t = _run_transport(list(range(0, 3000, 7)))
    assert all(len(b.records) <= 10 for b in t.batches)


def test_ndjson_round_trip(tmp_path):
    records = random_records(50, 2)
    path = tmp_path / "logs.ndjson"
    with open(path, "w") as fh:
        assert write_ndjson(records, fh) == 50
    assert read_ndjson(path) == records


def test_ndjson_errors_name_the_line(tmp_path):
    path = tmp_path / "bad.ndjson"
    path.write_text(rec().to_json() + "\n{not json\n")
    with pytest.raises(RecordError) as exc:
        read_ndjson(path)
    assert ":2:" in str(exc.value)


def test_query_filters():
    s = LogStore()
    s.append(rec(seq=1, kind="Action"))
    s.append(rec(seq=2, kind="Event"))
    assert [r.kind for r in s.query(QueryFilter(kinds={"Action"}))] == ["Action"]
    assert len(s.query(QueryFilter())) == 2


def _scan(records, f: QueryFilter):
    out = []
    for r in records:
        if f.ts_from is not None and r.ts < f.ts_from:
            continue
        if f.ts_to is not None and r.ts >= f.ts_to:
            continue
        if f.device_ids and r.device_id not in f.device_ids:
            continue
        if f.kinds and r.kind not in f.kinds:
            continue
        if f.app_ids and r.app_id not in f.app_ids:
            continue
        if f.location_mode and r.location_mode != f.location_mode:
            continue
        out.append(r)
    return sorted(out, key=lambda r: (r.ts, r.app_id, r.seq))


def test_random_filters_match_linear_scan():
    rng = random.Random(7)
    records = random_records(1_000, 3)
    s = LogStore()
    for r in records:
        s.append(r)
    for _ in range(200):
        lo = rng.choice([None, rng.randrange(0, 200_000)])
        f = QueryFilter(lo, rng.choice([None, (lo or 0) + rng.randrange(0, 500_000)]),
                        set(rng.sample(["d1", "d2", "d3"], rng.randrange(0, 3))),
                        set(rng.sample(KINDS, rng.randrange(0, 3))),
                        set(rng.sample(["a1", "a2", "a3", "a4"], rng.randrange(0, 3))),
                        rng.choice([None, "Office", "Other"]))
        assert s.query(f) == _scan(records, f)


def test_store_survives_restart(tmp_path):
    records = random_records(200, 4)
    with LogStore(tmp_path) as s:
        for r in records:
            s.append(r)
    again = LogStore(tmp_path)
    assert again.query() == sorted(records, key=lambda r: r.sort_key)
    with pytest.raises(DuplicateSeq):
        again.append(records[0])
    again.close()


def test_torn_final_line_is_dropped(tmp_path):
    with LogStore(tmp_path) as s:
        s.append(rec(seq=1))
    with open(tmp_path / "records.ndjson", "a") as fh:
        fh.write('{"ts": 5, "app_')
    assert len(LogStore(tmp_path).query()) == 1


def test_batch_replay_and_conflict():
    s = LogStore()
    b = Batch("b1", (rec(seq=1, batch="b1"), rec(seq=2, batch="b1")))
    assert s.append_batch(b) is True
    assert s.append_batch(b) is False
    assert len(s.query()) == 2
    with pytest.raises(BatchConflict):
        s.append_batch(Batch("b1", (rec(seq=1, ts=77, batch="b1"),)))


@pytest.fixture
def client(tmp_path):
    store = LogStore(tmp_path)
    with TestClient(create_app(store)) as c:
        yield c, store
    store.close()


def _doc(batch_id="b1", n=3, start=1):
    return Batch(batch_id, tuple(rec(seq=i, batch=batch_id) for i in range(start, start + n))).to_dict()


def test_http_post_replay_conflict(client):
    c, store = client
    r = c.post("/logs", json=_doc())
    assert r.status_code == 202 and r.json()["batch_id"] == "b1"
    assert len(c.get("/logs").json()) == 3
    assert c.post("/logs", json=_doc()).status_code == 202
    assert len(store.query()) == 3
    changed = _doc()
    changed["records"][0]["value"] = "off"
    assert c.post("/logs", json=changed).status_code == 409


@pytest.mark.parametrize("body", [b"{nope", b'{"records": []}', b'{"batch_id": "x", "records": [{"ts": "a"}]}'])
def test_http_malformed_is_400(client, body):
    c, _ = client
    assert c.post("/logs", content=body, headers={"content-type": "application/json"}).status_code == 400


def test_http_query_filters(client):
    c, _ = client
    c.post("/logs", json=_doc(n=5))
    got = c.get("/logs", params={"from": 20, "to": 40, "kind": "Event", "device": "d1"}).json()
    assert [r["seq"] for r in got] == [2, 3]
    assert c.get("/logs", params={"kind": "Bogus"}).status_code == 400


def test_http_sink_posts_batches(client):
    c, store = client
    sink = HttpSink("http://test", client=c)
    sink(Batch.from_dict(_doc("s1", 4)))
    assert sink.responses == [202] and len(store.query()) == 4
