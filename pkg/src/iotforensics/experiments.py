"""Simulate-train-detect-evaluate harness used by the CLI and the acceptance suite."""
from __future__ import annotations

import hashlib
import json
import time
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

from .analyzer.detect import Detection, DetectionParams, default_tau, detect
from .analyzer.features import (
    SLOT_MS, FeatureSchema, StateSequence, build_states, label_logs, schema_for_topology, thresholds_from_logs,
)
from .analyzer.markov import EPSILON, ModelFormatError, TransitionModel, train_many
from .analyzer.metrics import EvalWindow, MetricsReport, evaluate, split_train_test
from .analyzer.policy import SecurityPolicy, policy_for_scenario, policy_from_dict
from .analyzer.tamper import (
    RATIO, WINDOW_SLOTS, CooperationModel, TamperReport, detect_tampered, tamper_detections,
)
from .frontend import SourceUnit
from .instrumenter import InstrumentationReport, instrument
from .logstore.records import LogRecord
from .logstore.transport import BATCH_SIZE, FLUSH_INTERVAL_MS
from .sim.runtime import RunOutput, bundled_app_names, load_app_source, prepare_apps, run, scenario_sources
from .sim.scenario import Scenario, TruthLabel
from .sim.threats import ACTIVITIES, BEHAVIORS, BENIGN, inject_threat

SUITE_CLASSES = ACTIVITIES + BEHAVIORS[1:]       # Behavior-1 is scored by the tamper experiment
TIME_DEPENDENT = ("Activity-4", "Activity-5")
TIME_INDEPENDENT = tuple(c for c in ACTIVITIES if c not in TIME_DEPENDENT)
ALL_CLASSES = ACTIVITIES + BEHAVIORS
MODEL_FORMAT = "iotforensics-models"
MODEL_VERSION = 1
TAMPERED_PER_RUN = 2             # devices frozen by a Behavior-1 run inside a suite


@dataclass(frozen=True)
class RunSpec:
    run_id: str
    seed: int
    threat: str | None = None
    params: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def malicious(self) -> bool:
        return self.threat is not None


@dataclass(frozen=True)
class AnalysisConfig:
    slot_ms: int = SLOT_MS
    epsilon: float = EPSILON
    tau: float | None = None
    window: int = WINDOW_SLOTS
    ratio: float = RATIO
    train_fraction: float = 0.75
    split_seed: int = 0

    def to_dict(self) -> dict:
        return {"slot_ms": self.slot_ms, "epsilon": self.epsilon, "tau": self.tau, "window": self.window,
                "ratio": self.ratio, "train_fraction": self.train_fraction, "split_seed": self.split_seed}


def topology(scenario: Scenario) -> dict[str, tuple[str, str]]:
    return {d.id: (d.type, d.zone) for d in scenario.devices}


def scenario_for(base: Scenario, spec: RunSpec) -> Scenario:
    sc = replace(base, seed=spec.seed)
    if spec.threat is not None:
        sc = inject_threat(sc, spec.threat, spec.params)
    return sc


def simulate(base: Scenario, spec: RunSpec, apps: dict | None = None, batch_size: int = BATCH_SIZE,
             interval_ms: int = FLUSH_INTERVAL_MS) -> RunOutput:
    """Run one spec; ``apps`` caches parsed sources and is topped up with any the threat needs."""
    sc = scenario_for(base, spec)
    missing = [name for name in scenario_sources(sc) if apps is None or name not in apps]
    if missing:
        apps = {**(apps or {}), **{k: v for k, v in prepare_apps(sc).items() if k in missing}}
    return run(sc, apps, batch_size=batch_size, interval_ms=interval_ms)


@dataclass(frozen=True)
class TrainedModels:
    schema: FeatureSchema
    markov: TransitionModel
    cooperation: CooperationModel
    policy: SecurityPolicy
    topology: dict[str, tuple[str, str]]
    config: AnalysisConfig
    tau: float

    def states(self, logs: Sequence[LogRecord]):
        labeled = label_logs(logs, self.topology, self.schema, self.config.slot_ms)
        return labeled, build_states(labeled, self.schema, self.config.slot_ms)

    def detect(self, logs: Sequence[LogRecord], run_id: str = "", tamper: bool = False) -> list[Detection]:
        """Markov and policy detections; with ``tamper`` also Behavior-1 windows from device cooperation."""
        labeled, states = self.states(logs)
        out = detect(self.markov, states, self.policy, labeled, DetectionParams(tau=self.tau), run_id)
        if tamper:
            report = detect_tampered(self.cooperation, states, self.config.window, self.config.ratio)
            out += tamper_detections(report, labeled, run_id)
        return out

    def tamper(self, logs: Sequence[LogRecord]) -> TamperReport:
        _, states = self.states(logs)
        return detect_tampered(self.cooperation, states, self.config.window, self.config.ratio)

    def to_dict(self) -> dict:
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "config": self.config.to_dict(), "tau": self.tau,
                "topology": {k: list(v) for k, v in sorted(self.topology.items())},
                "policy": self.policy.to_dict(), "markov": self.markov.to_dict(),
                "cooperation": self.cooperation.to_dict()}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> TrainedModels:
        if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
            raise ModelFormatError("not a trained model bundle")
        if doc.get("version") != MODEL_VERSION:
            raise ModelFormatError(f"unsupported model bundle version {doc.get('version')!r}")
        try:
            markov = TransitionModel.from_dict(doc["markov"])
            return cls(markov.schema, markov, CooperationModel.from_dict(doc["cooperation"]),
                       policy_from_dict(doc["policy"]), {k: (v[0], v[1]) for k, v in doc["topology"].items()},
                       AnalysisConfig(**doc["config"]), float(doc["tau"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"malformed model bundle: {exc}") from None

    @classmethod
    def loads(cls, text: str) -> TrainedModels:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"model bundle is not JSON: {exc}") from None
        return cls.from_dict(doc)


def fit(scenario: Scenario, training_logs: Sequence[Sequence[LogRecord]],
        config: AnalysisConfig = AnalysisConfig()) -> TrainedModels:
    topo = topology(scenario)
    policy = policy_for_scenario(scenario)
    types = {k: v[0] for k, v in topo.items()}
    thresholds = dict(policy.thresholds)
    for logs in training_logs:
        thresholds.update(thresholds_from_logs(logs, types))
    schema = schema_for_topology(scenario.devices, thresholds)
    seqs: list[StateSequence] = []
    for logs in training_logs:
        labeled = label_logs(logs, topo, schema, config.slot_ms)
        seqs.append(build_states(labeled, schema, config.slot_ms))
    markov = train_many(seqs, config.epsilon, schema)
    coop = CooperationModel.train(seqs, schema)
    tau = config.tau if config.tau is not None else default_tau(markov)
    return TrainedModels(schema, markov, coop, policy, topo, config, tau)


# -- threat suite ------------------------------------------------------------------------

@dataclass
class SuiteResult:
    metrics: MetricsReport
    windows: list[EvalWindow]
    detections: list[Detection]
    train_runs: list[str]
    test_runs: list[str]
    seconds: float
    models: TrainedModels | None = field(default=None, repr=False)

    def accuracy(self, cls: str) -> float:
        return self.metrics.per_class[cls].acc


def suite_specs(n_benign: int, n_threat: int, seed: int, classes: Sequence[str] = SUITE_CLASSES,
                weekdays: int = 5) -> list[RunSpec]:
    specs = [RunSpec(f"benign-{i:03d}", seed * 10_000 + i) for i in range(n_benign)]
    for i in range(n_threat):
        cls = classes[i % len(classes)]
        params = {"day": (i // len(classes)) % weekdays}
        if cls == "Behavior-1":
            params |= {"k": TAMPERED_PER_RUN, "choice_seed": seed * 10_000 + 5_000 + i}
        specs.append(RunSpec(f"threat-{i:03d}", seed * 10_000 + 5_000 + i, cls, params))
    return specs


def paired_windows(truth: dict[str, Sequence[TruthLabel]], benign_runs: Sequence[str]) -> list[EvalWindow]:
    """Each injected window, plus the same time span in a benign run (round robin) as its negative."""
    windows: list[EvalWindow] = []
    k = 0
    for run_id, labels in truth.items():
        for t in labels:
            windows.append(EvalWindow(run_id, t.start, t.end, t.label, t.label))
            if benign_runs:
                windows.append(EvalWindow(benign_runs[k % len(benign_runs)], t.start, t.end, BENIGN, t.label))
            k += 1
    return windows


def run_suite(base: Scenario, n_benign: int = 30, n_threat: int = 50, seed: int = 42,
              config: AnalysisConfig = AnalysisConfig(), classes: Sequence[str] = SUITE_CLASSES,
              batch_size: int = BATCH_SIZE, interval_ms: int = FLUSH_INTERVAL_MS) -> SuiteResult:
    """Train on benign runs, then score threat windows against time-matched benign windows."""
    t0 = time.perf_counter()
    weekdays = sum(1 for d in range(base.days) if base.weekday(d) < 5) or base.days
    specs = suite_specs(n_benign, n_threat, seed, classes, min(weekdays, base.days))
    train_specs, test_specs = split_train_test(specs, config.train_fraction, config.split_seed)
    apps = prepare_apps(base)
    outputs = {s.run_id: simulate(base, s, apps, batch_size, interval_ms) for s in specs}
    models = fit(base, [outputs[s.run_id].logs for s in train_specs], config)
    detections: list[Detection] = []
    with_tamper = "Behavior-1" in classes
    for s in test_specs:
        detections += models.detect(outputs[s.run_id].logs, s.run_id, tamper=with_tamper)
    windows = paired_windows({s.run_id: outputs[s.run_id].truth for s in test_specs if s.malicious},
                             [s.run_id for s in test_specs if not s.malicious])
    metrics = evaluate(detections, windows, [c for c in classes if any(w.label == c for w in windows)])
    return SuiteResult(metrics, windows, detections, [s.run_id for s in train_specs],
                       [s.run_id for s in test_specs], time.perf_counter() - t0, models)


# -- tampered-device trend -----------------------------------------------------------------

@dataclass
class TamperPoint:
    k: int
    accuracy: float
    precision: float
    recall: float
    untrusted: float               # fraction of runs marked untrusted
    reports: list[TamperReport] = field(default_factory=list, repr=False)


def tamper_trend(base: Scenario, models: TrainedModels, ks: Sequence[int] = (2, 6, 10, 14, 18),
                 runs_per_k: int = 4, seed: int = 42, day: int = 0) -> list[TamperPoint]:
    """Accuracy of per-device tamper flags as the number of frozen devices grows."""
    apps = prepare_apps(base)
    devices = sorted(d.id for d in base.devices)
    out = []
    for k in ks:
        accs, precs, recs, untrusted, reports = [], [], [], 0, []
        for r in range(runs_per_k):
            spec = RunSpec(f"tamper-k{k}-{r}", seed * 10_000 + 7_000 + 100 * k + r, "Behavior-1",
                           {"k": k, "choice_seed": seed * 1000 + 10 * k + r, "day": day})
            output = simulate(base, spec, apps)
            truth = set(output.truth[-1].detail.get("diverged", [])) if output.truth else set()
            rep = models.tamper(output.logs)
            reports.append(rep)
            tp = len(rep.flagged & truth)
            fp = len(rep.flagged - truth)
            fn = len(truth - rep.flagged)
            tn = len(devices) - tp - fp - fn
            accs.append((tp + tn) / len(devices))
            precs.append(tp / (tp + fp) if tp + fp else 1.0)
            recs.append(tp / (tp + fn) if tp + fn else 1.0)
            untrusted += rep.trust == "untrusted"
        out.append(TamperPoint(k, sum(accs) / len(accs), sum(precs) / len(precs), sum(recs) / len(recs),
                               untrusted / runs_per_k, reports))
    return out


# -- multi-user trend -----------------------------------------------------------------------

@dataclass
class UserPoint:
    users: int
    time_dependent: float          # mean per-class accuracy over Activity-4/5
    time_independent: float        # mean per-class accuracy over Activity-1/2/3
    result: SuiteResult = field(repr=False)


def user_trend(base: Scenario, users: Sequence[int] = tuple(range(2, 11)), n_benign: int = 8,
               n_threat: int = 10, seed: int = 42, config: AnalysisConfig = AnalysisConfig()) -> list[UserPoint]:
    """Activity accuracy as the number of occupants grows, one small suite per user count."""
    out = []
    for n in users:
        res = run_suite(base.with_users(n), n_benign, n_threat, seed, config, ACTIVITIES)
        dep = [res.accuracy(c) for c in TIME_DEPENDENT if c in res.metrics.per_class]
        ind = [res.accuracy(c) for c in TIME_INDEPENDENT if c in res.metrics.per_class]
        out.append(UserPoint(n, sum(dep) / len(dep), sum(ind) / len(ind), res))
    return out


# -- reproducibility and end-to-end report --------------------------------------------------

def config_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()[:16]


def corpus_overhead(sources: Sequence[SourceUnit] | None = None) -> dict:
    """Instrument every app in the corpus (bundled apps by default) and summarise what was added."""
    if sources is None:
        sources = [load_app_source(name) for name in bundled_app_names()]
    reports: list[InstrumentationReport] = [instrument(src)[1] for src in sources]
    apps = [{"app": r.origin, "points": len(r.points), "lines_added": r.lines_added, "bytes_added": r.bytes_added,
             "original_lines": r.original_lines} for r in reports]
    n = len(apps) or 1
    return {"apps": apps,
            "mean_lines_added": round(sum(a["lines_added"] for a in apps) / n, 3),
            "mean_bytes_added": round(sum(a["bytes_added"] for a in apps) / n, 3)}


def e2e_report(base: Scenario, n_benign: int, n_threat: int, seed: int, config: AnalysisConfig = AnalysisConfig(),
               classes: Sequence[str] = ALL_CLASSES, sources: Sequence[SourceUnit] | None = None,
               batch_size: int = BATCH_SIZE, interval_ms: int = FLUSH_INTERVAL_MS,
               overhead: dict | None = None) -> tuple[dict, SuiteResult]:
    """Instrument the corpus, simulate, train, detect and score; the document is deterministic in its inputs."""
    if overhead is None:
        overhead = corpus_overhead(sources)
    res = run_suite(base, n_benign, n_threat, seed, config, classes, batch_size, interval_ms)
    params = {"scenario": base.name, "scenario_digest": base.digest(), "days": base.days, "benign_runs": n_benign,
              "threat_runs": n_threat, "classes": list(classes), "batch_size": batch_size,
              "interval_ms": interval_ms, "tau": res.models.tau if res.models else None, **config.to_dict()}
    verdicts = {}
    for run_id in res.test_runs:
        found = sorted({d.cls for d in res.detections if d.run == run_id})
        verdicts[run_id] = found or [BENIGN]
    doc = {
        "reproduction": {"config_hash": config_hash(params), "seed": seed, "params": params},
        "overhead": overhead,
        "runs": {"train": res.train_runs, "test": res.test_runs},
        "verdicts": verdicts,
        "metrics": res.metrics.to_dict(),
        "detections": [d.to_dict() for d in sorted(res.detections, key=lambda d: (d.run, d.window, d.cls))],
    }
    return doc, res
