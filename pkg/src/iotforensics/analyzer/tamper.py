"""Tampered-device detection by cross-checking each device against its peers."""
from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .detect import Detection
from .features import FeatureSchema, LabeledRecord, StateSequence

WINDOW_SLOTS = 30
RATIO = 0.5
MIN_SUPPORT = 6          # slots a peer context must have been seen for before it may vote
CONFIDENCE = 0.99        # share of those slots the majority bit must hold


def _peer_masks(schema: FeatureSchema, devices: tuple[int, ...]) -> dict[int, tuple[int, int]]:
    """Per device: (all other devices, same-zone devices plus hubs)."""
    feats = schema.features
    out = {}
    for d in devices:
        everyone = sum(1 << p for p in devices if p != d)
        near = sum(1 << p for p in devices
                   if p != d and (feats[p].zone == feats[d].zone or feats[p].device_type == "hub"))
        out[d] = (everyone, near)
    return out


@dataclass(frozen=True)
class CooperationModel:
    """Leave-one-out predictors: for device d, the bit d usually had given its peers' bits.

    Two context levels are kept per device: every other device, and only the devices in
    d's zone plus hubs.  ``tables[d][level]`` maps a peer context to slot counts
    ``(off, on)`` observed in training.  The zone level is consulted only when the full
    context was never seen, which keeps one stuck peer from silencing everyone else.
    Pulse features are never part of a context.
    """
    schema: FeatureSchema
    devices: tuple[int, ...]                       # feature positions that represent devices
    tables: dict[int, tuple[dict[int, tuple[int, int]], dict[int, tuple[int, int]]]]
    min_support: int = MIN_SUPPORT
    confidence: float = CONFIDENCE

    @cached_property
    def masks(self) -> dict[int, tuple[int, int]]:
        return _peer_masks(self.schema, self.devices)

    @classmethod
    def train(cls, sequences: Iterable[StateSequence], schema: FeatureSchema,
              min_support: int = MIN_SUPPORT, confidence: float = CONFIDENCE) -> CooperationModel:
        devices = tuple(i for i, f in enumerate(schema.features) if f.device_id is not None)
        masks = _peer_masks(schema, devices)
        tables: dict[int, tuple[dict, dict]] = {d: ({}, {}) for d in devices}
        seen = False
        for seq in sequences:
            for run in seq.runs:
                seen = True
                for d in devices:
                    bit = (run.bits >> d) & 1
                    for level, mask in enumerate(masks[d]):
                        row = tables[d][level].setdefault(run.bits & mask, [0, 0])
                        row[bit] += run.length
        if not seen:
            raise ValueError("no training states")
        frozen = {d: tuple({ctx: (row[0], row[1]) for ctx, row in t.items()} for t in pair)
                  for d, pair in tables.items()}
        return cls(schema, devices, frozen, min_support, confidence)

    def implied(self, d: int, bits: int) -> int | None:
        """The bit peers imply for device ``d`` in state ``bits``; None when they cannot tell."""
        for level, mask in enumerate(self.masks[d]):
            row = self.tables[d][level].get(bits & mask)
            if row is None or row[0] + row[1] < self.min_support:
                continue
            if max(row) < self.confidence * (row[0] + row[1]):
                return None
            return 1 if row[1] > row[0] else 0
        return None

    def contradicts(self, d: int, bits: int) -> bool:
        """True when peers imply the other bit and training never showed d's bit in this context.

        The second condition keeps the training runs themselves free of contradictions.
        """
        for level, mask in enumerate(self.masks[d]):
            row = self.tables[d][level].get(bits & mask)
            if row is None or row[0] + row[1] < self.min_support:
                continue
            bit = (bits >> d) & 1
            return row[bit] == 0 and row[1 - bit] >= self.min_support
        return False

    def to_dict(self) -> dict:
        return {"schema": self.schema.to_dict(), "devices": list(self.devices), "min_support": self.min_support,
                "confidence": self.confidence,
                "tables": {str(d): [[[ctx, *row] for ctx, row in sorted(t.items())] for t in pair]
                           for d, pair in self.tables.items()}}

    @classmethod
    def from_dict(cls, doc: dict) -> CooperationModel:
        tables = {int(d): tuple({int(r[0]): (int(r[1]), int(r[2])) for r in rows} for rows in pair)
                  for d, pair in doc["tables"].items()}
        return cls(FeatureSchema.from_dict(doc["schema"]), tuple(doc["devices"]), tables,
                   int(doc.get("min_support", MIN_SUPPORT)), float(doc.get("confidence", CONFIDENCE)))


@dataclass(frozen=True)
class TamperReport:
    flagged: frozenset[str]
    trust: str                                # "trusted" or "untrusted"
    peak_ratio: dict[str, float]              # device id -> worst window contradiction ratio
    spans: dict[str, tuple[int, int]] = field(default_factory=dict)   # flagged device -> worst window, ms

    def to_dict(self) -> dict:
        return {"flagged": sorted(self.flagged), "trust": self.trust,
                "peak_ratio": {k: round(v, 6) for k, v in sorted(self.peak_ratio.items())},
                "spans": {k: list(v) for k, v in sorted(self.spans.items())}}


def _peak(per_run: np.ndarray, lengths: np.ndarray, window: int) -> tuple[float, int]:
    """Worst windowed ratio and the slot offset where that window starts."""
    per_slot = np.repeat(per_run, lengths)
    if per_slot.size < window:
        return float(per_slot.sum()) / window, 0
    csum = np.concatenate(([0], np.cumsum(per_slot)))
    sums = csum[window:] - csum[:-window]
    at = int(sums.argmax())
    return float(sums[at]) / window, at


def _ratios(model: CooperationModel, bits: list[int], lengths: np.ndarray, window: int,
            devices: Iterable[int]) -> dict[int, tuple[float, int, int]]:
    """Per device: worst windowed ratio, total contradicted slots, worst window's slot offset."""
    out = {}
    for d in devices:
        verdict: dict[int, bool] = {}
        bad = np.zeros(len(bits), dtype=np.int32)
        for k, b in enumerate(bits):
            if b not in verdict:
                verdict[b] = model.contradicts(d, b)
            bad[k] = verdict[b]
        peak, at = _peak(bad, lengths, window)
        out[d] = (peak, int(bad @ lengths), at)
    return out


def _impute(model: CooperationModel, d: int, bits: list[int]) -> list[int]:
    out = []
    for b in bits:
        want = model.implied(d, b)
        out.append(b if want is None else (b & ~(1 << d)) | (want << d))
    return out


def contradiction_ratios(model: CooperationModel, states: StateSequence, window: int = WINDOW_SLOTS) -> dict[str, float]:
    """Worst fraction of contradicted slots over any ``window`` consecutive slots, per device."""
    feats = model.schema.features
    if not states.runs:
        return {feats[d].device_id: 0.0 for d in model.devices}
    lengths = np.array([r.length for r in states.runs], dtype=np.int64)
    ratios = _ratios(model, [r.bits for r in states.runs], lengths, window, model.devices)
    return {feats[d].device_id: r[0] for d, r in ratios.items()}


def detect_tampered(model: CooperationModel, states: StateSequence, window: int = WINDOW_SLOTS,
                    ratio: float = RATIO) -> TamperReport:
    """Flag devices whose reports disagree with their peers for more than ``ratio`` of some window.

    Flags are taken one at a time, the device with the most contradicted slots first.  A
    flagged device's bits are then replaced by what its peers imply, so its bad reports stop
    counting against the peers.
    """
    feats = model.schema.features
    peaks = {feats[d].device_id: 0.0 for d in model.devices}
    flagged: list[int] = []
    spans: dict[str, tuple[int, int]] = {}
    if states.runs:
        lengths = np.array([r.length for r in states.runs], dtype=np.int64)
        bits = [r.bits for r in states.runs]
        remaining = list(model.devices)
        while remaining:
            ratios = _ratios(model, bits, lengths, window, remaining)
            for d, (peak, _, _) in ratios.items():
                peaks[feats[d].device_id] = peak
            over = [d for d in remaining if ratios[d][0] > ratio]
            if not over:
                break
            worst = max(over, key=lambda d: (ratios[d][1], -d))
            flagged.append(worst)
            first = states.runs[0].start + ratios[worst][2]
            spans[feats[worst].device_id] = (first * states.slot_ms, (first + window) * states.slot_ms)
            remaining.remove(worst)
            bits = _impute(model, worst, bits)
    names = frozenset(feats[d].device_id for d in flagged)
    trust = "untrusted" if len(names) > 0.5 * len(peaks) else "trusted"
    return TamperReport(names, trust, peaks, spans)


def tamper_detections(report: TamperReport, labeled: Sequence[LabeledRecord], run: str = "") -> list[Detection]:
    """One Behavior-1 detection per flagged device, over its worst window.

    Evidence is the device's last report before the window closes (the value it is stuck
    on) plus the peer reports inside the window that contradict it.
    """
    out = []
    for dev, (start, end) in sorted(report.spans.items()):
        own = [lr for lr in labeled if lr.record.device_id == dev and lr.record.ts < end]
        peers = [lr for lr in labeled if lr.record.device_id not in (None, dev) and start <= lr.record.ts < end
                 and lr.record.kind == "Event"]
        evidence = own[-1:] + peers
        if evidence:
            refs = tuple((lr.record.app_id, lr.record.seq) for lr in evidence)
            out.append(Detection((start, end), "Behavior-1", report.peak_ratio.get(dev, 1.0), refs, run))
    return out
