"""Anomaly windows from the Markov model, classified against the security policy."""
from __future__ import annotations

import bisect
from collections.abc import Sequence
from dataclasses import dataclass, field

from ..sim.threats import BENIGN
from .features import LabeledRecord, SchemaMismatch, StateSequence
from .markov import TransitionModel, predict_next, transition_prob
from .policy import SecurityPolicy

# most specific evidence first; residual Markov anomalies last
PRECEDENCE = ("Behavior-2", "Activity-3", "Behavior-5", "Behavior-3", "Behavior-4", "Activity-5",
              "Activity-4", "Activity-2", "Behavior-1", "Activity-1")
RANK = {c: i for i, c in enumerate(PRECEDENCE)}
POINT_CLASSES = frozenset({"Behavior-2", "Activity-5"})   # evidence is a single access event


@dataclass(frozen=True)
class DetectionParams:
    tau: float | None = None              # None: half the smallest training transition probability
    merge_gap_slots: int = 6              # anomalous slots this close form one window
    min_residual_slots: int = 6           # unexplained anomalies shorter than this are ignored
    margin_ms: int = 60_000               # evidence search margin around a window
    toggle_count: int = 4
    toggle_window_ms: int = 5_000
    disable_window_ms: int = 10_000
    rule_merge_ms: int = 600_000          # policy-rule evidence this close forms one window


@dataclass(frozen=True)
class Detection:
    window: tuple[int, int]
    cls: str
    score: float
    evidence: tuple[tuple[str, int], ...] = ()      # (app id, seq) of contributing records
    run: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.cls != BENIGN and not self.evidence:
            raise ValueError("a non-benign detection needs evidence")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must lie in [0, 1]")

    def overlaps(self, start: int, end: int) -> bool:
        return self.window[0] < end and start < self.window[1]

    def to_dict(self) -> dict:
        return {"start": self.window[0], "end": self.window[1], "class": self.cls, "score": round(self.score, 12),
                "evidence": [list(e) for e in self.evidence], "run": self.run}


def _ref(lr: LabeledRecord) -> tuple[str, int]:
    return lr.record.app_id, lr.record.seq


class _Index:
    """Labeled records searchable by time."""

    def __init__(self, labeled: Sequence[LabeledRecord]) -> None:
        self.items = list(labeled)
        self.ts = [lr.record.ts for lr in self.items]

    def between(self, start: int, end: int) -> list[LabeledRecord]:
        return self.items[bisect.bisect_left(self.ts, start):bisect.bisect_left(self.ts, end)]

    def last_before(self, ts: int, pred) -> LabeledRecord | None:
        k = bisect.bisect_right(self.ts, ts) - 1
        while k >= 0:
            if pred(self.items[k]):
                return self.items[k]
            k -= 1
        return None


# -- evidence predicates ----------------------------------------------------------

def _is_access(lr: LabeledRecord) -> bool:
    r = lr.record
    return lr.device_type == "lock" and r.kind == "Event" and r.controller_id is not None


def unregistered_access(recs, policy: SecurityPolicy) -> list[LabeledRecord]:
    return [lr for lr in recs if _is_access(lr) and lr.record.controller_id not in policy.controllers]


def restricted_access(recs, policy: SecurityPolicy) -> list[LabeledRecord]:
    return [lr for lr in recs if _is_access(lr) and lr.record.controller_id in policy.controllers
            and not policy.authorized_for_zone(lr.record.controller_id, lr.zone)]


def after_hours_access(recs, policy: SecurityPolicy) -> list[LabeledRecord]:
    return [lr for lr in recs if _is_access(lr) and lr.record.value == "unlocked"
            and not policy.allowed_at(lr.record.ts)]


def foreign_actions(recs, policy: SecurityPolicy) -> list[LabeledRecord]:
    if not policy.apps:
        return []
    return [lr for lr in recs if lr.record.kind == "Action" and lr.record.app_id not in policy.apps]


def remote_control(recs) -> list[LabeledRecord]:
    return [lr for lr in recs if lr.record.controller_id is not None and lr.record.location_mode == "Other"
            and not _is_access(lr)]


def _is_subsequence(short: tuple, long: tuple) -> bool:
    it = iter(long)
    return all(v in it for v in short)


def contradictions(recs) -> list[LabeledRecord]:
    """Apps that were told different things about the same device change.

    Every subscriber of a change logs the values it received at that instant. A
    subscriber whose values are not a subsequence of the most common report (value
    filters legitimately drop some) saw a falsified state.
    """
    seen: dict[tuple, dict[str, list[LabeledRecord]]] = {}
    for lr in recs:
        r = lr.record
        if r.kind == "Event" and r.device_id is not None:
            seen.setdefault((r.ts, r.device_id, r.attribute), {}).setdefault(r.app_id, []).append(lr)
    out = []
    for per_app in seen.values():
        if len(per_app) < 2:
            continue
        reports = {app: tuple(str(lr.record.value) for lr in lrs) for app, lrs in per_app.items()}
        tally: dict[tuple, int] = {}
        for values in reports.values():
            tally[values] = tally.get(values, 0) + 1
        reference = max(tally, key=lambda v: (tally[v], len(v), v))
        odd = [app for app, values in reports.items() if not _is_subsequence(values, reference)]
        if odd:
            for app in sorted(per_app):
                out.extend(per_app[app])
    return sorted(out, key=lambda lr: lr.record.sort_key)


def toggle_bursts(recs, params: DetectionParams) -> list[LabeledRecord]:
    """Rapid on/off commands on one device followed by another device being switched off."""
    actions: dict[str, list[LabeledRecord]] = {}
    for lr in recs:
        r = lr.record
        if r.kind == "Action" and r.attribute in ("on", "off") and r.device_id is not None:
            actions.setdefault(r.device_id, []).append(lr)
    disables = [lr for lr in recs if lr.record.kind == "Event" and lr.record.value in ("off", "idle")]
    out: list[LabeledRecord] = []
    for dev, acts in actions.items():
        # one toggle per instant: several apps may log the same command
        distinct = []
        for lr in acts:
            if not distinct or (lr.record.ts, lr.record.attribute) != (distinct[-1].record.ts,
                                                                       distinct[-1].record.attribute):
                distinct.append(lr)
        lo = 0
        for hi in range(len(distinct)):
            while distinct[hi].record.ts - distinct[lo].record.ts > params.toggle_window_ms:
                lo += 1
            if hi - lo + 1 < params.toggle_count:
                continue
            t_end = distinct[hi].record.ts
            hit = [d for d in disables if d.record.device_id != dev
                   and t_end <= d.record.ts <= t_end + params.disable_window_ms]
            if hit:
                out.extend(distinct[lo:hi + 1])
                out.extend(hit)
    uniq = {(_ref(lr)): lr for lr in out}
    return sorted(uniq.values(), key=lambda lr: lr.record.sort_key)


def _motion_features(states: StateSequence, schema) -> int:
    mask = 0
    for i, f in enumerate(schema.features):
        if f.device_type == "motion-sensor":
            mask |= 1 << i
    return mask


def after_hours_presence(states: StateSequence, schema, policy: SecurityPolicy, start_slot: int | None = None,
                         end_slot: int | None = None) -> list[tuple[int, int]]:
    """Slot intervals with an active motion bit outside allowed hours."""
    mask = _motion_features(states, schema)
    if not mask or not states.runs:
        return []
    slot_ms = states.slot_ms
    out = []
    for r in states.runs:
        a, b = r.start, r.start + r.length
        if start_slot is not None:
            a, b = max(a, start_slot), min(b, end_slot)
        if a >= b or not r.bits & mask:
            continue
        for x, y in policy.disallowed_spans(a * slot_ms, b * slot_ms):
            out.append((x // slot_ms, -(-y // slot_ms)))
    return out


# -- Markov anomalies ----------------------------------------------------------------

def anomalous_slots(model: TransitionModel, states: StateSequence, tau: float) -> list[tuple[int, int, float]]:
    """(start_slot, end_slot, min_prob) intervals whose incoming transitions are anomalous."""
    cache: dict[tuple[int, int], tuple[bool, float]] = {}

    def check(i: int, j: int) -> tuple[bool, float]:
        key = (i, j)
        if key not in cache:
            p = transition_prob(model, i, j)
            seen = j in model.counts.get(i, {})
            cache[key] = (p < tau or (predict_next(model, i) != j and not seen), p)
        return cache[key]

    out = []
    runs = states.runs
    for k, r in enumerate(runs):
        if k > 0:
            bad, p = check(runs[k - 1].bits, r.bits)
            if bad:
                out.append((r.start, r.start + 1, p))
        if r.length > 1:
            bad, p = check(r.bits, r.bits)
            if bad:
                out.append((r.start + 1, r.start + r.length, p))
    return out


def _merge_intervals(items: list[tuple[int, int, float]], gap: int) -> list[tuple[int, int, float]]:
    out: list[list] = []
    for a, b, p in sorted(items):
        if out and a - out[-1][1] <= gap:
            out[-1][1] = max(out[-1][1], b)
            out[-1][2] = min(out[-1][2], p)
        else:
            out.append([a, b, p])
    return [tuple(x) for x in out]


def default_tau(model: TransitionModel) -> float:
    return 0.5 * model.min_observed_prob()


def _check_schema(model: TransitionModel, states: StateSequence) -> None:
    if model.schema is not None and states.n and states.n != model.schema.n:
        raise SchemaMismatch(f"states have {states.n} features, model expects {model.schema.n}")


def classify_window(recs: list[LabeledRecord], states: StateSequence, schema, policy: SecurityPolicy,
                    slots: tuple[int, int], params: DetectionParams) -> tuple[str, list[LabeledRecord]]:
    """Class and evidence for one anomalous window; Benign when nothing explains it."""
    checks = (
        ("Behavior-2", lambda: unregistered_access(recs, policy)),
        ("Activity-3", lambda: restricted_access(recs, policy)),
        ("Behavior-5", lambda: toggle_bursts(recs, params)),
        ("Behavior-3", lambda: contradictions(recs)),
        ("Behavior-4", lambda: foreign_actions(recs, policy)),
        ("Activity-5", lambda: after_hours_access(recs, policy)),
    )
    for cls, fn in checks:
        ev = fn()
        if ev:
            return cls, ev
    if schema is not None and after_hours_presence(states, schema, policy, *slots):
        ev = [lr for lr in recs if lr.device_type == "motion-sensor" and lr.record.kind == "Event"]
        if ev:
            return "Activity-4", ev
    ev = remote_control(recs)
    if ev:
        return "Activity-2", ev
    if slots[1] - slots[0] >= params.min_residual_slots:
        ev = [lr for lr in recs if lr.record.kind in ("Event", "Action")]
        if ev:
            return "Activity-1", ev
    return BENIGN, []


def detect_anomalies(model: TransitionModel, states: StateSequence, policy: SecurityPolicy,
                     labeled: Sequence[LabeledRecord], params: DetectionParams = DetectionParams(),
                     run: str = "") -> list[Detection]:
    """Markov anomaly windows, each classified by the records around it."""
    _check_schema(model, states)
    if not states.runs:
        return []
    tau = params.tau if params.tau is not None else default_tau(model)
    index = _Index(labeled)
    slot_ms = states.slot_ms
    out = []
    for a, b, p in _merge_intervals(anomalous_slots(model, states, tau), params.merge_gap_slots):
        start, end = a * slot_ms, b * slot_ms
        recs = index.between(start - params.margin_ms, end + params.margin_ms)
        cls, ev = classify_window(recs, states, model.schema, policy, (a, b), params)
        if cls == BENIGN:
            continue
        if cls in POINT_CLASSES:
            # a lock access is an instant; it should not claim the rest of the unusual stretch
            start = min(lr.record.ts for lr in ev) // slot_ms * slot_ms
            end = (max(lr.record.ts for lr in ev) // slot_ms + 1) * slot_ms
        out.append(Detection((start, end), cls, max(0.0, min(1.0, 1.0 - p)), tuple(_ref(lr) for lr in ev), run))
    return out


# -- policy rule scans ------------------------------------------------------------------

def _windows_from(evidence: list[LabeledRecord], cls: str, merge_ms: int, slot_ms: int, run: str) -> list[Detection]:
    out: list[Detection] = []
    group: list[LabeledRecord] = []
    for lr in sorted(evidence, key=lambda lr: lr.record.sort_key):
        if group and lr.record.ts - group[-1].record.ts > merge_ms:
            out.append(_rule_detection(group, cls, slot_ms, run))
            group = []
        group.append(lr)
    if group:
        out.append(_rule_detection(group, cls, slot_ms, run))
    return out


def _rule_detection(group: list[LabeledRecord], cls: str, slot_ms: int, run: str) -> Detection:
    start = group[0].record.ts // slot_ms * slot_ms
    end = (group[-1].record.ts // slot_ms + 1) * slot_ms
    return Detection((start, end), cls, 1.0, tuple(_ref(lr) for lr in group), run)


def scan_policy(states: StateSequence, labeled: Sequence[LabeledRecord], policy: SecurityPolicy, schema,
                params: DetectionParams = DetectionParams(), run: str = "") -> list[Detection]:
    """Policy violations visible directly in the records, whether or not the state sequence is unusual."""
    recs = list(labeled)
    slot_ms = states.slot_ms
    out: list[Detection] = []
    for cls, ev in (("Behavior-2", unregistered_access(recs, policy)),
                    ("Activity-3", restricted_access(recs, policy)),
                    ("Behavior-5", toggle_bursts(recs, params)),
                    ("Behavior-3", contradictions(recs)),
                    ("Behavior-4", foreign_actions(recs, policy)),
                    ("Activity-5", after_hours_access(recs, policy))):
        out += _windows_from(ev, cls, params.rule_merge_ms, slot_ms, run)
    if schema is not None:
        index = _Index(recs)
        spans = _merge_intervals([(a, b, 1.0) for a, b in after_hours_presence(states, schema, policy)],
                                 params.merge_gap_slots)
        for a, b, _ in spans:
            start, end = a * slot_ms, b * slot_ms
            ev = [lr for lr in index.between(start, end) if lr.device_type == "motion-sensor"]
            if not ev:
                last = index.last_before(start, lambda lr: lr.device_type == "motion-sensor"
                                         and lr.record.kind == "Event" and lr.record.value == "active")
                ev = [last] if last is not None else []
            if ev:
                out.append(Detection((start, end), "Activity-4", 1.0, tuple(_ref(lr) for lr in ev), run))
    return out


def merge_detections(detections: list[Detection]) -> list[Detection]:
    """Union overlapping windows of the same class so each class stream is non-overlapping."""
    by_class: dict[str, list[Detection]] = {}
    for d in detections:
        by_class.setdefault(d.cls, []).append(d)
    out = []
    for cls, ds in by_class.items():
        ds.sort(key=lambda d: d.window)
        cur = ds[0]
        for d in ds[1:]:
            if d.window[0] < cur.window[1]:
                ev = tuple(dict.fromkeys(cur.evidence + d.evidence))
                cur = Detection((cur.window[0], max(cur.window[1], d.window[1])), cls, max(cur.score, d.score), ev,
                                cur.run)
            else:
                out.append(cur)
                cur = d
        out.append(cur)
    return sorted(out, key=lambda d: (d.window, RANK.get(d.cls, 99)))


def detect(model: TransitionModel, states: StateSequence, policy: SecurityPolicy,
           labeled: Sequence[LabeledRecord], params: DetectionParams = DetectionParams(),
           run: str = "") -> list[Detection]:
    """Markov anomalies plus direct policy violations."""
    found = detect_anomalies(model, states, policy, labeled, params, run)
    found += scan_policy(states, labeled, policy, model.schema, params, run)
    return merge_detections(found)


def window_class(detections: Sequence[Detection], start: int, end: int) -> str:
    """Class assigned to an evaluation window: the most specific overlapping detection."""
    hits = [d.cls for d in detections if d.overlaps(start, end)]
    return min(hits, key=lambda c: RANK.get(c, 99)) if hits else BENIGN
