"""Log labeling, binarization and state-vector construction."""
from __future__ import annotations

import bisect
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from ..devices import DEVICE_TYPES
from ..logstore.records import LogRecord

SLOT_MS = 10_000
UNKNOWN = "Unknown"
SOURCES = ("S", "D", "M", "L")      # sensor, device, controller, location
SENSOR_TYPES = frozenset({"motion-sensor", "light-sensor", "temperature-sensor", "door-sensor"})
CONTROLLER = "controller"
REMOTE = "remote"


class MissingThreshold(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


def binarize(value: float, threshold: float | None) -> int:
    """1 iff ``value`` is strictly above ``threshold``."""
    if threshold is None:
        raise MissingThreshold("numeric feature has no threshold")
    return 1 if value > threshold else 0


@dataclass(frozen=True)
class Feature:
    id: str
    source: str
    device_id: str | None = None
    attribute: str | None = None
    threshold: float | None = None
    active: tuple[str, ...] = ()
    zone: str | None = None
    device_type: str | None = None

    @property
    def numeric(self) -> bool:
        return not self.active and self.device_id is not None

    def bit(self, value) -> int:
        if self.numeric:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                return 0
            return binarize(value, self.threshold)
        return 1 if value in self.active else 0


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]

    def __post_init__(self) -> None:
        if not self.features:
            raise ValueError("a feature schema needs at least one feature")
        ids = [f.id for f in self.features]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate feature id")
        for f in self.features:
            if f.source not in SOURCES:
                raise ValueError(f"feature {f.id}: unknown source {f.source!r}")
            if f.numeric and f.threshold is None:
                raise MissingThreshold(f"numeric feature {f.id} has no threshold")
        index = {}
        for i, f in enumerate(self.features):
            if f.device_id is not None:
                index[(f.device_id, f.attribute)] = i
        object.__setattr__(self, "_index", index)

    @property
    def n(self) -> int:
        return len(self.features)

    def index_of(self, device_id: str | None, attribute: str | None) -> int | None:
        return self._index.get((device_id, attribute))

    def position(self, feature_id: str) -> int:
        for i, f in enumerate(self.features):
            if f.id == feature_id:
                return i
        raise KeyError(feature_id)

    @property
    def device_ids(self) -> list[str]:
        return [f.device_id for f in self.features if f.device_id is not None]

    def to_dict(self) -> dict:
        return {"features": [
            {k: v for k, v in (("id", f.id), ("source", f.source), ("device_id", f.device_id),
                               ("attribute", f.attribute), ("threshold", f.threshold),
                               ("active", list(f.active)), ("zone", f.zone), ("device_type", f.device_type))
             if v not in (None, [])}
            for f in self.features]}

    @classmethod
    def from_dict(cls, doc: dict) -> FeatureSchema:
        feats = []
        for d in doc["features"]:
            feats.append(Feature(d["id"], d["source"], d.get("device_id"), d.get("attribute"), d.get("threshold"),
                                 tuple(d.get("active", ())), d.get("zone"), d.get("device_type")))
        return cls(tuple(feats))


def thresholds_from_logs(records: Iterable[LogRecord], device_types: dict[str, str]) -> dict[str, float]:
    """Recover binarizer thresholds from the numeric inputs users set in each app.

    An app's numeric input counts as a threshold for the numeric sensors bound to the
    same app. Inputs named like a threshold win when an app has several numeric inputs.
    """
    numeric_inputs: dict[str, dict[str, float]] = {}
    bound: dict[str, set[str]] = {}
    for r in records:
        if r.kind == "UserInput" and isinstance(r.value, (int, float)) and not isinstance(r.value, bool):
            numeric_inputs.setdefault(r.app_id, {})[r.attribute] = float(r.value)
        elif r.kind == "DeviceInfo" and r.device_id is not None:
            dtype = device_types.get(r.device_id)
            if dtype and DEVICE_TYPES[dtype].state_attribute.numeric:
                bound.setdefault(r.app_id, set()).add(r.device_id)
    out: dict[str, float] = {}
    for app_id in sorted(bound):
        inputs = numeric_inputs.get(app_id, {})
        named = {k: v for k, v in inputs.items() if "threshold" in k.lower() or "trigger" in k.lower()}
        pick = named if named else inputs
        if len(pick) != 1:
            continue
        value = next(iter(pick.values()))
        for dev in sorted(bound[app_id]):
            out.setdefault(dev, value)
    return out


def schema_for_topology(devices, thresholds: dict[str, float], pulses: bool = True) -> FeatureSchema:
    """One feature per device state attribute, plus controller pulse features."""
    feats = []
    for d in sorted(devices, key=lambda d: d.id):
        dtype = DEVICE_TYPES[d.type]
        attr = dtype.state_attribute
        source = "L" if d.type == "hub" else "S" if d.type in SENSOR_TYPES else "D"
        threshold = thresholds.get(d.id) if attr.numeric else None
        if attr.numeric and threshold is None:
            raise MissingThreshold(f"no threshold for numeric device {d.id}")
        feats.append(Feature(d.id, source, d.id, attr.name, threshold, attr.active, d.zone, d.type))
    if pulses:
        feats.append(Feature(CONTROLLER, "M"))
        feats.append(Feature(REMOTE, "M"))
    return FeatureSchema(tuple(feats))


@dataclass(frozen=True)
class LabeledRecord:
    record: LogRecord
    slot: int
    binding: str            # device id or Unknown
    zone: str
    location_mode: str
    feature: int | None = None
    device_type: str = ""


def label_logs(records: Sequence[LogRecord], topology: dict[str, tuple[str, str]] | None = None,
               schema: FeatureSchema | None = None, slot_ms: int = SLOT_MS) -> list[LabeledRecord]:
    """Annotate each record with its time slot, device binding, zone and location mode.

    ``topology`` maps device id to (type, zone). Records from devices outside it are
    labeled Unknown and kept.
    """
    topology = topology or {}
    out = []
    for r in records:
        if r.device_id is not None and r.device_id in topology:
            binding, zone = r.device_id, topology[r.device_id][1]
        elif r.device_id in (None, "location"):
            binding, zone = r.device_id or "-", "-"
        else:
            binding, zone = UNKNOWN, UNKNOWN
        feature = schema.index_of(r.device_id, r.attribute) if schema is not None else None
        dtype = topology[binding][0] if binding in topology else ""
        out.append(LabeledRecord(r, r.ts // slot_ms, binding, zone, r.location_mode, feature, dtype))
    return out


@dataclass(frozen=True)
class StateVector:
    bits: int
    slot: int
    ts_range: tuple[int, int]


@dataclass(frozen=True)
class StateRun:
    bits: int
    start: int          # first slot
    length: int


@dataclass
class StateSequence(Sequence):
    """Slot-by-slot states stored as runs of identical consecutive values."""
    runs: list[StateRun] = field(default_factory=list)
    n: int = 0
    slot_ms: int = SLOT_MS

    def __post_init__(self) -> None:
        self._starts = [r.start for r in self.runs]

    def __len__(self) -> int:
        return sum(r.length for r in self.runs)

    @property
    def first_slot(self) -> int:
        return self.runs[0].start if self.runs else 0

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        total = len(self)
        if i < 0:
            i += total
        if not 0 <= i < total:
            raise IndexError(i)
        slot = self.first_slot + i
        k = bisect.bisect_right(self._starts, slot) - 1
        return StateVector(self.runs[k].bits, slot, (slot * self.slot_ms, (slot + 1) * self.slot_ms))

    def __iter__(self):
        for r in self.runs:
            for s in range(r.start, r.start + r.length):
                yield StateVector(r.bits, s, (s * self.slot_ms, (s + 1) * self.slot_ms))

    def bits(self) -> list[int]:
        return [r.bits for r in self.runs for _ in range(r.length)]

    def state_at(self, slot: int) -> int | None:
        k = bisect.bisect_right(self._starts, slot) - 1
        if k < 0 or slot >= self.runs[k].start + self.runs[k].length:
            return None
        return self.runs[k].bits


def build_states(labeled: Sequence[LabeledRecord], schema: FeatureSchema, slot_ms: int = SLOT_MS) -> StateSequence:
    """Sample-and-hold state per slot from the first to the last record's slot.

    Device bits follow Event records; controller pulses are set only in slots that hold a
    controller-attributed record.
    """
    if not labeled:
        return StateSequence([], schema.n, slot_ms)
    ctl = schema.position(CONTROLLER) if any(f.id == CONTROLLER for f in schema.features) else None
    rem = schema.position(REMOTE) if any(f.id == REMOTE for f in schema.features) else None
    by_slot: dict[int, list[LabeledRecord]] = {}
    for lr in labeled:
        by_slot.setdefault(lr.slot, []).append(lr)
    runs: list[StateRun] = []
    held = 0
    prev = None
    for slot in sorted(by_slot):
        if prev is not None and slot > prev + 1:
            runs.append(StateRun(held, prev + 1, slot - prev - 1))
        pulses = 0
        for lr in by_slot[slot]:
            rec = lr.record
            if rec.controller_id is not None:
                if ctl is not None:
                    pulses |= 1 << ctl
                if rem is not None and rec.location_mode == "Other":
                    pulses |= 1 << rem
            idx = lr.feature if lr.feature is not None else schema.index_of(rec.device_id, rec.attribute)
            if idx is None or rec.kind != "Event":
                continue
            if schema.features[idx].bit(rec.value):
                held |= 1 << idx
            else:
                held &= ~(1 << idx)
        runs.append(StateRun(held | pulses, slot, 1))
        prev = slot
    return StateSequence(_merge(runs), schema.n, slot_ms)


def _merge(runs: list[StateRun]) -> list[StateRun]:
    out: list[StateRun] = []
    for r in runs:
        if r.length <= 0:
            continue
        if out and out[-1].bits == r.bits and out[-1].start + out[-1].length == r.start:
            out[-1] = StateRun(r.bits, out[-1].start, out[-1].length + r.length)
        else:
            out.append(r)
    return out
