"""Per-class confusion counts over evaluation windows, and run splitting."""
from __future__ import annotations

import math
import random
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

from ..sim.threats import BENIGN
from .detect import Detection, window_class


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fn: int = 0
    tn: int = 0
    fp: int = 0

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.tn + self.fp

    @property
    def total(self) -> int:
        return self.positives + self.negatives

    # empty populations count as vacuously perfect so the rate identities still hold
    @property
    def tpr(self) -> float:
        return self.tp / self.positives if self.positives else 1.0

    @property
    def fnr(self) -> float:
        return self.fn / self.positives if self.positives else 0.0

    @property
    def tnr(self) -> float:
        return self.tn / self.negatives if self.negatives else 1.0

    @property
    def fpr(self) -> float:
        return self.fp / self.negatives if self.negatives else 0.0

    @property
    def acc(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 1.0

    @property
    def f_score(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 1.0

    def to_dict(self) -> dict:
        return {"TP": self.tp, "FN": self.fn, "TN": self.tn, "FP": self.fp,
                "TPR": self.tpr, "FNR": self.fnr, "TNR": self.tnr, "FPR": self.fpr,
                "ACC": self.acc, "F": self.f_score}


@dataclass(frozen=True)
class EvalWindow:
    run: str
    start: int
    end: int
    label: str                 # true class, or Benign
    group: str | None = None   # class whose population a benign window belongs to; None = every class


@dataclass(frozen=True)
class MetricsReport:
    per_class: dict[str, Confusion]
    matrix: dict[tuple[str, str], int] = field(default_factory=dict)    # (true, predicted) -> count

    def to_dict(self) -> dict:
        return {
            "classes": {c: m.to_dict() for c, m in sorted(self.per_class.items())},
            "confusion": [{"true": t, "predicted": p, "count": n} for (t, p), n in sorted(self.matrix.items())],
        }

    def table(self) -> str:
        head = f"{'class':<12} {'TP':>4} {'FN':>4} {'TN':>4} {'FP':>4} {'TPR':>6} {'FNR':>6} {'TNR':>6} " \
               f"{'FPR':>6} {'ACC':>6} {'F':>6}"
        lines = [head]
        for c, m in sorted(self.per_class.items()):
            lines.append(f"{c:<12} {m.tp:>4} {m.fn:>4} {m.tn:>4} {m.fp:>4} {m.tpr:>6.3f} {m.fnr:>6.3f} "
                         f"{m.tnr:>6.3f} {m.fpr:>6.3f} {m.acc:>6.3f} {m.f_score:>6.3f}")
        return "\n".join(lines)


def evaluate(detections: Iterable[Detection], windows: Sequence[EvalWindow],
             classes: Iterable[str] | None = None) -> MetricsReport:
    """Score each window by its most specific overlapping detection.

    For class X the positives are windows labeled X and the negatives are benign windows
    in X's population; a negative predicted as any threat counts as a false positive.
    """
    by_run: dict[str, list[Detection]] = {}
    for d in detections:
        by_run.setdefault(d.run, []).append(d)
    predicted = [window_class(by_run.get(w.run, ()), w.start, w.end) for w in windows]
    if classes is None:
        classes = sorted({w.label for w in windows if w.label != BENIGN} | {w.group for w in windows if w.group})
    matrix: dict[tuple[str, str], int] = {}
    for w, p in zip(windows, predicted):
        matrix[(w.label, p)] = matrix.get((w.label, p), 0) + 1
    per_class = {}
    for c in classes:
        tp = fn = tn = fp = 0
        for w, p in zip(windows, predicted):
            if w.label == c:
                if p == c:
                    tp += 1
                else:
                    fn += 1
            elif w.label == BENIGN and w.group in (None, c):
                if p == BENIGN:
                    tn += 1
                else:
                    fp += 1
        per_class[c] = Confusion(tp, fn, tn, fp)
    return MetricsReport(per_class, matrix)


def split_train_test(runs: Sequence, fraction: float, seed: int = 0,
                     malicious: Callable[[object], bool] = lambda r: bool(getattr(r, "malicious", False))):
    """Seeded split of benign runs; malicious runs always land in the test set."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    benign = [r for r in runs if not malicious(r)]
    bad = [r for r in runs if malicious(r)]
    order = list(range(len(benign)))
    random.Random(seed).shuffle(order)
    n_train = math.floor(len(benign) * fraction + 1e-9)
    train_idx = set(order[:n_train])
    train = [r for k, r in enumerate(benign) if k in train_idx]
    test = [r for k, r in enumerate(benign) if k not in train_idx] + bad
    return train, test
