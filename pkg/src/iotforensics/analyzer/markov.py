"""Sparse first-order Markov chain over environment states."""
from __future__ import annotations

import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .features import FeatureSchema, StateSequence, StateVector

EPSILON = 1e-3
MODEL_FORMAT = "iotforensics-markov"
MODEL_VERSION = 1


class InsufficientData(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TransitionModel:
    counts: dict[int, dict[int, int]]          # i -> {j: N_ij}
    initial_counts: dict[int, int]             # start state -> number of sequences
    epsilon: float = EPSILON
    schema: FeatureSchema | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        support = set(self.initial_counts)
        for i, row in self.counts.items():
            support.add(i)
            support.update(row)
        object.__setattr__(self, "_support", tuple(sorted(support)))
        object.__setattr__(self, "_support_set", frozenset(support))
        object.__setattr__(self, "_totals", {i: sum(row.values()) for i, row in self.counts.items()})

    @property
    def support(self) -> tuple[int, ...]:
        return self._support

    def row_total(self, i: int) -> int:
        return self._totals.get(i, 0)

    @property
    def n_sequences(self) -> int:
        return sum(self.initial_counts.values())

    def initial_prob(self, state: int) -> float:
        if state not in self._support_set:
            return 0.0
        total = self.n_sequences
        c = self.initial_counts.get(state, 0)
        denom = total + self.epsilon * len(self._support)
        return (c + self.epsilon) / denom if denom > 0 else 1.0 / len(self._support)

    def min_observed_prob(self) -> float:
        """Smallest transition probability among pairs seen in training."""
        return min(transition_prob(self, i, j) for i, row in self.counts.items() for j in row)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "epsilon": self.epsilon,
            "schema": self.schema.to_dict() if self.schema is not None else None,
            "initial": [[s, c] for s, c in sorted(self.initial_counts.items())],
            "counts": [[i, j, c] for i in sorted(self.counts) for j, c in sorted(self.counts[i].items())],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, doc: dict) -> TransitionModel:
        if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
            raise ModelFormatError("not a transition model document")
        if doc.get("version") != MODEL_VERSION:
            raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
        counts: dict[int, dict[int, int]] = {}
        for i, j, c in doc["counts"]:
            counts.setdefault(int(i), {})[int(j)] = int(c)
        initial = {int(s): int(c) for s, c in doc["initial"]}
        schema = FeatureSchema.from_dict(doc["schema"]) if doc.get("schema") else None
        return cls(counts, initial, float(doc["epsilon"]), schema)

    @classmethod
    def loads(cls, text: str) -> TransitionModel:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"model file is not valid JSON: {exc}") from None
        return cls.from_dict(doc)


def _as_bits(states) -> list[int]:
    if isinstance(states, StateSequence):
        return states.bits()
    return [s.bits if isinstance(s, StateVector) else int(s) for s in states]


def _transitions(states) -> Iterable[tuple[int, int, int]]:
    """(i, j, multiplicity) for consecutive pairs; run-length aware."""
    if isinstance(states, StateSequence):
        runs = states.runs
        for k, r in enumerate(runs):
            if r.length > 1:
                yield r.bits, r.bits, r.length - 1
            if k + 1 < len(runs):
                yield r.bits, runs[k + 1].bits, 1
        return
    bits = _as_bits(states)
    for a, b in zip(bits, bits[1:]):
        yield a, b, 1


def _first(states) -> int | None:
    if isinstance(states, StateSequence):
        return states.runs[0].bits if states.runs else None
    bits = _as_bits(states[:1] if isinstance(states, Sequence) else list(states)[:1])
    return bits[0] if bits else None


def train_many(sequences: Iterable, epsilon: float = EPSILON, schema: FeatureSchema | None = None) -> TransitionModel:
    """Count transitions across training sequences; each sequence contributes one start state."""
    counts: dict[int, dict[int, int]] = {}
    initial: dict[int, int] = {}
    n_transitions = 0
    for seq in sequences:
        start = _first(seq)
        if start is None:
            continue
        initial[start] = initial.get(start, 0) + 1
        for i, j, m in _transitions(seq):
            row = counts.setdefault(i, {})
            row[j] = row.get(j, 0) + m
            n_transitions += m
    if n_transitions == 0:
        raise InsufficientData("training needs at least two consecutive states")
    return TransitionModel(counts, initial, epsilon, schema)


def train(states, epsilon: float = EPSILON, schema: FeatureSchema | None = None) -> TransitionModel:
    return train_many([states], epsilon, schema)


def transition_prob(model: TransitionModel, i: int, j: int) -> float:
    """Laplace-smoothed P(j | i) over the model's support; uniform for unseen sources."""
    if j not in model._support_set:
        return 0.0
    total = model._totals.get(i, 0)
    size = len(model._support)
    if total == 0:
        return 1.0 / size
    n_ij = model.counts[i].get(j, 0)
    return (n_ij + model.epsilon) / (total + model.epsilon * size)


def sequence_log_probability(model: TransitionModel, states) -> float:
    bits = _as_bits(states) if not isinstance(states, StateSequence) else None
    if bits is not None and not bits:
        raise ValueError("sequence must be non-empty")
    start = bits[0] if bits is not None else _first(states)
    if start is None:
        raise ValueError("sequence must be non-empty")
    q = model.initial_prob(start)
    if q == 0.0:
        return -math.inf
    logp = math.log(q)
    pairs = _transitions(states) if bits is None else ((a, b, 1) for a, b in zip(bits, bits[1:]))
    for i, j, m in pairs:
        p = transition_prob(model, i, j)
        if p == 0.0:
            return -math.inf
        logp += m * math.log(p)
    return logp


def sequence_probability(model: TransitionModel, states) -> float:
    """q(x1) times the product of transition probabilities, accumulated in log space."""
    logp = sequence_log_probability(model, states)
    return 0.0 if logp == -math.inf else math.exp(logp)


def predict_next(model: TransitionModel, state: int) -> int:
    """Most likely successor; ties go to the lowest state value."""
    if not model.support:
        raise InsufficientData("empty model")
    row = model.counts.get(state)
    if not row:
        return model.support[0]
    # smoothing is monotone in the counts, so the argmax is over raw counts
    best = max(row.values())
    return min(j for j, c in row.items() if c == best)
