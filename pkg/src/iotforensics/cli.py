"""Command-line entry point: ``iotforensics <command> ...``.

Exit codes: 0 success, 1 input that could not be processed (parse errors, already
instrumented apps, malformed models, policies or logs), 2 usage errors and missing files.
Human-readable output goes to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

from .analyzer.detect import window_class
from .analyzer.features import MissingThreshold, SchemaMismatch
from .analyzer.markov import InsufficientData, ModelFormatError
from .analyzer.metrics import evaluate
from .analyzer.policy import PolicyError, load_policy
from .config import ConfigError, Params, PipelineConfig, load_config
from .experiments import (
    ALL_CLASSES, RunSpec, TrainedModels, config_hash, corpus_overhead, e2e_report, fit, paired_windows,
    simulate,
)
from .frontend import FrontendError, SourceUnit
from .instrumenter import AlreadyInstrumented, GraphError, instrument
from .logstore.records import Batch, LogRecord, RecordError, read_ndjson, write_ndjson
from .logstore.store import DATA_DIR_ENV, LogStore, StoreError
from .sim.interpreter import InterpreterError
from .sim.runtime import PlainAppError, prepare_apps, run
from .sim.scenario import SchemaError, Scenario, TruthLabel, load_scenario
from .sim.threats import BENIGN, ParamError, UnknownThreat, canonical, inject_threat


class UsageError(Exception):
    pass


class StageFailed(Exception):
    def __init__(self, stage: str, cause: Exception) -> None:
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")


# errors caused by the content of an input rather than by how the command was called
DATA_ERRORS = (FrontendError, AlreadyInstrumented, GraphError, SchemaError, PolicyError, ModelFormatError,
               RecordError, StoreError, UnknownThreat, ParamError, InsufficientData, MissingThreshold,
               SchemaMismatch, InterpreterError, PlainAppError)

DEFAULTS = Params()


def _err(msg: str) -> None:
    print(f"iotforensics: {msg}", file=sys.stderr)


def _write_json(doc: dict, path: str | None) -> str:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    return text


def _config(args) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    values = {k: getattr(args, k, None) for k in
              ("slot_ms", "epsilon", "tau", "batch_size", "flush_ms", "window", "ratio", "seed", "train_fraction",
               "scenario", "data_dir", "model", "policy", "apps_dir")}
    return cfg.override(**values)


def _scenario(cfg: PipelineConfig, days: int | None) -> Scenario:
    sc = load_scenario(cfg.paths.scenario)
    if days is not None:
        if days < 1:
            raise UsageError("--days must be at least 1")
        sc = replace(sc, days=days)
    return sc


@contextmanager
def _stage(name: str):
    try:
        yield
    except DATA_ERRORS as exc:
        raise StageFailed(name, exc) from exc


def _scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return {"true": True, "false": False, "null": None}.get(text, text)


def parse_injection(spec: str) -> tuple[str, dict]:
    """``Threat[:key=value,...]``; list values use ``|`` (``devices=a|b``)."""
    name, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq or not key:
            raise UsageError(f"bad injection parameter {item!r} (expected key=value)")
        params[key.strip()] = ([_scalar(v) for v in value.split("|")] if "|" in value else _scalar(value.strip()))
    return canonical(name.strip()), params


def _read_logs(args) -> list[LogRecord]:
    if args.logs:
        records = []
        for path in args.logs:
            if not Path(path).is_file():
                raise FileNotFoundError(f"log file not found: {path}")
            records += read_ndjson(path)
        return sorted(records, key=lambda r: r.sort_key)
    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise UsageError("give --logs or --data-dir (or set " + DATA_DIR_ENV + ")")
    if not Path(data_dir).is_dir():
        raise FileNotFoundError(f"data directory not found: {data_dir}")
    return LogStore(data_dir).query()


# -- commands -------------------------------------------------------------------------------

def cmd_instrument(args) -> int:
    path = Path(args.input)
    if not path.is_file():
        raise FileNotFoundError(f"input not found: {path}")
    out, report = instrument(SourceUnit(path.read_text(), path.name))
    if args.output:
        Path(args.output).write_text(out.text)
    else:
        sys.stdout.write(out.text)
    if args.report:
        _write_json(report.to_dict(), args.report)
    print(f"{path.name}: {len(report.points)} points, {report.lines_added} lines added, "
          f"{report.bytes_added} bytes added", file=sys.stderr if not args.output else sys.stdout)
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    sc = _scenario(cfg, args.days)
    sc = replace(sc, seed=cfg.params.seed)
    for spec in args.inject or ():
        threat, params = parse_injection(spec)
        sc = inject_threat(sc, threat, params)
    sink = None
    store = None
    if args.url:
        from .logstore.service import HttpSink
        sink = HttpSink(args.url)
    elif cfg.paths.data_dir:
        store = LogStore(cfg.paths.data_dir)
        sink = store.append_batch
    out = run(sc, prepare_apps(sc, instrumented=not args.plain), allow_plain=args.plain, sink=sink,
              batch_size=cfg.params.batch_size, interval_ms=cfg.params.flush_ms)
    if store is not None:
        store.flush()
        store.close()
    run_id = args.run_id or f"{sc.name}-{cfg.params.seed}"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            write_ndjson(out.logs, fh)
    if args.truth:
        _write_json({"run": run_id, "scenario": sc.name, "seed": cfg.params.seed, "days": sc.days,
                     "labels": [{"label": t.label, "start": t.start, "end": t.end, "detail": t.detail}
                                for t in out.truth]}, args.truth)
    labels = ", ".join(f"{t.label} [{t.start}, {t.end})" for t in out.truth) or "none"
    print(f"{run_id}: {len(out.logs)} records in {out.requests} batches; injected: {labels}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .logstore.service import create_app

    cfg = _config(args)
    data_dir = cfg.paths.data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise UsageError("give --data-dir or set " + DATA_DIR_ENV)
    uvicorn.run(create_app(LogStore(data_dir)), host=args.host, port=args.port, log_level="warning")
    return 0


def batches_for(records: list[LogRecord], size: int) -> list[Batch]:
    """Group records into batches, keeping any batch ids they already carry.

    Records without one are chunked per app in sequence order under ids derived from
    their first and last sequence numbers, so re-ingesting the same file is a no-op.
    """
    out: list[Batch] = []
    carried: dict[str, list[LogRecord]] = {}
    loose: dict[str, list[LogRecord]] = {}
    for r in records:
        if r.batch_id:
            carried.setdefault(r.batch_id, []).append(r)
        else:
            loose.setdefault(r.app_id, []).append(r)
    for batch_id, recs in carried.items():
        out.append(Batch(batch_id, tuple(recs)))
    for app_id, recs in sorted(loose.items()):
        recs.sort(key=lambda r: r.seq)
        for i in range(0, len(recs), size):
            chunk = recs[i:i + size]
            bid = f"ingest:{app_id}:{chunk[0].seq}-{chunk[-1].seq}"
            out.append(Batch(bid, tuple(r.with_batch(bid) for r in chunk)))
    return out


def cmd_ingest(args) -> int:
    cfg = _config(args)
    records = []
    for path in args.files:
        if not Path(path).is_file():
            raise FileNotFoundError(f"log file not found: {path}")
        records += read_ndjson(path)
    batches = batches_for(records, cfg.params.batch_size)
    stored = 0
    if args.url:
        from .logstore.service import HttpSink
        sink = HttpSink(args.url)
        for b in batches:
            sink(b)
        stored = sum(1 for code in sink.responses if code == 202)
    else:
        data_dir = cfg.paths.data_dir or os.environ.get(DATA_DIR_ENV)
        if not data_dir:
            raise UsageError("give --data-dir, --url, or set " + DATA_DIR_ENV)
        store = LogStore(data_dir)
        try:
            stored = sum(1 for b in batches if store.append_batch(b))
            store.flush()
        finally:
            store.close()
    print(f"ingested {len(records)} records in {len(batches)} batches ({stored} new)")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    sc = _scenario(cfg, args.days)
    if args.logs:
        training = []
        for path in args.logs:
            if not Path(path).is_file():
                raise FileNotFoundError(f"log file not found: {path}")
            training.append(read_ndjson(path))
    else:
        if args.runs < 1:
            raise UsageError("--runs must be at least 1")
        apps = prepare_apps(sc)
        training = [simulate(sc, RunSpec(f"train-{i:03d}", cfg.params.seed * 10_000 + i), apps,
                             cfg.params.batch_size, cfg.params.flush_ms).logs for i in range(args.runs)]
    models = fit(sc, training, cfg.analysis())
    out = cfg.paths.model or "model.json"
    Path(out).write_text(models.dumps() + "\n")
    print(f"trained on {len(training)} runs: {len(models.markov.support)} states, "
          f"{sum(len(r) for r in models.markov.counts.values())} transitions, tau={models.tau:.6g} -> {out}")
    return 0


def _load_models(cfg: PipelineConfig) -> TrainedModels:
    if not cfg.paths.model:
        raise UsageError("--model is required")
    path = Path(cfg.paths.model)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    models = TrainedModels.loads(path.read_text())
    if cfg.paths.policy:
        if not Path(cfg.paths.policy).is_file():
            raise FileNotFoundError(f"policy file not found: {cfg.paths.policy}")
        models = replace(models, policy=load_policy(cfg.paths.policy, {z for _, z in models.topology.values()}))
    if cfg.params.tau is not None:
        models = replace(models, tau=cfg.params.tau)
    return models


def cmd_analyze(args) -> int:
    cfg = _config(args)
    models = _load_models(cfg)
    records = [r for r in _read_logs(args)
               if (args.ts_from is None or r.ts >= args.ts_from) and (args.ts_to is None or r.ts < args.ts_to)]
    run_id = args.run_id or (Path(args.logs[0]).stem if args.logs else "store")
    detections = models.detect(records, run_id, tamper=not args.no_tamper)
    tamper = models.tamper(records)
    detections.sort(key=lambda d: (d.window, d.cls))
    doc = {
        "reproduction": {"config_hash": config_hash({"model": config_hash(models.to_dict()),
                                                     "policy": models.policy.to_dict(), "tau": models.tau}),
                         "model_hash": config_hash(models.to_dict()), "tau": models.tau,
                         "params": models.config.to_dict()},
        "run": run_id,
        "range": [args.ts_from, args.ts_to],
        "records": len(records),
        "detections": [d.to_dict() for d in detections],
        "tamper": tamper.to_dict(),
    }
    _write_json(doc, args.output)
    print(f"{run_id}: {len(records)} records, {len(detections)} detections, system {tamper.trust}")
    for d in detections:
        print(f"  {d.window[0]:>12} {d.window[1]:>12}  {d.cls:<11} score={d.score:.3f} evidence={len(d.evidence)}")
    if tamper.flagged:
        print(f"  tampered devices: {', '.join(sorted(tamper.flagged))}")
    return 0


def _load_json(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise RecordError(f"{p}: not JSON: {exc}") from None


def cmd_evaluate(args) -> int:
    from .analyzer.detect import Detection

    truth_docs = [_load_json(path) for path in args.truth]
    for path, doc in zip(args.truth, truth_docs):
        if not isinstance(doc, dict) or "run" not in doc:
            raise RecordError(f"{path}: not a truth file (no 'run' key)")
    # equal-length lists pair up by position, so run names need not agree
    paired = len(args.detections) == len(truth_docs)
    detections = []
    for i, path in enumerate(args.detections):
        doc = _load_json(path)
        for d in doc.get("detections", []):
            run = truth_docs[i]["run"] if paired else d["run"]
            detections.append(Detection((d["start"], d["end"]), d["class"], d["score"],
                                        tuple(tuple(e) for e in d["evidence"]), run))
    truth: dict[str, list[TruthLabel]] = {}
    benign: list[str] = []
    for doc in truth_docs:
        labels = [TruthLabel(t["label"], t["start"], t["end"], t.get("detail", {})) for t in doc.get("labels", [])]
        if labels:
            truth[doc["run"]] = labels
        else:
            benign.append(doc["run"])
    windows = paired_windows(truth, benign)
    classes = sorted({w.label for w in windows if w.label != BENIGN})
    report = evaluate(detections, windows, classes)
    doc = {"metrics": report.to_dict(),
           "windows": [{"run": w.run, "start": w.start, "end": w.end, "label": w.label,
                        "predicted": window_class([d for d in detections if d.run == w.run], w.start, w.end)}
                       for w in windows]}
    _write_json(doc, args.output)
    print(report.table())
    return 0


def cmd_e2e(args) -> int:
    cfg = _config(args)
    sc = _scenario(cfg, args.days)
    sources = None
    if cfg.paths.apps_dir:
        root = Path(cfg.paths.apps_dir)
        if not root.is_dir():
            raise FileNotFoundError(f"apps directory not found: {root}")
        sources = [SourceUnit(p.read_text(), p.name) for p in sorted(root.glob("*.groovy"))]
    classes = [canonical(c) for c in args.classes] if args.classes else list(ALL_CLASSES)
    with _stage("instrument"):
        overhead = corpus_overhead(sources)
    with _stage("simulate/train/analyze/evaluate"):
        doc, res = e2e_report(sc, args.benign, args.threats, cfg.params.seed, cfg.analysis(), classes, sources,
                              cfg.params.batch_size, cfg.params.flush_ms, overhead)
    text = _write_json(doc, args.output)
    print(f"corpus: {len(doc['overhead']['apps'])} apps, mean {doc['overhead']['mean_lines_added']} lines / "
          f"{doc['overhead']['mean_bytes_added']} bytes added")
    print(f"runs: {len(res.train_runs)} train, {len(res.test_runs)} test; "
          f"{len(res.detections)} detections; config {doc['reproduction']['config_hash']}")
    if res.metrics.per_class:
        print(res.metrics.table())
    else:
        flagged = sorted(r for r, v in doc["verdicts"].items() if v != [BENIGN])
        print("no threats injected; " + ("all runs Benign" if not flagged else f"non-benign runs: {flagged}"))
    if not args.output:
        sys.stdout.write(text)
    return 0


def render_report(doc: dict) -> str:
    """Human-readable summary of any JSON document this tool writes."""
    lines = []
    repro = doc.get("reproduction")
    if repro:
        lines.append(f"config {repro.get('config_hash')}  seed {repro.get('seed', '-')}")
        for k, v in sorted(repro.get("params", {}).items()):
            lines.append(f"  {k} = {v}")
    if "overhead" in doc:
        o = doc["overhead"]
        lines.append(f"instrumentation: mean {o['mean_lines_added']} lines, {o['mean_bytes_added']} bytes added")
        for a in o["apps"]:
            lines.append(f"  {a['app']:<28} points={a['points']:>3} lines+={a['lines_added']:>3} "
                         f"bytes+={a['bytes_added']:>5}")
    if "point_count" in doc:
        lines.append(f"{doc['origin']}: {doc['point_count']} points, {doc['lines_added']} lines, "
                     f"{doc['bytes_added']} bytes added")
    metrics = doc.get("metrics")
    if metrics and metrics.get("classes"):
        lines.append(f"{'class':<12} {'TP':>4} {'FN':>4} {'TN':>4} {'FP':>4} {'ACC':>6} {'F':>6}")
        for c, m in sorted(metrics["classes"].items()):
            lines.append(f"{c:<12} {m['TP']:>4} {m['FN']:>4} {m['TN']:>4} {m['FP']:>4} {m['ACC']:>6.3f} {m['F']:>6.3f}")
    if "detections" in doc:
        lines.append(f"detections: {len(doc['detections'])}")
        for d in doc["detections"][:50]:
            lines.append(f"  {d['run']:<14} {d['start']:>12} {d['end']:>12} {d['class']}")
        if len(doc["detections"]) > 50:
            lines.append(f"  ... {len(doc['detections']) - 50} more")
    if "tamper" in doc:
        t = doc["tamper"]
        lines.append(f"system {t['trust']}; tampered: {', '.join(t['flagged']) or 'none'}")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    sys.stdout.write(render_report(_load_json(args.input)))
    return 0


# -- parser ---------------------------------------------------------------------------------

def _add_config(p) -> None:
    p.add_argument("--config", metavar="FILE", help="pipeline config file (YAML); flags override it (default: none)")


def _add_scenario(p) -> None:
    p.add_argument("--scenario", metavar="NAME|FILE",
                   help="bundled scenario name or scenario file (default: office-baseline)")
    p.add_argument("--days", type=int, metavar="N", help="override the scenario's length in days (default: as in file)")
    p.add_argument("--seed", type=int, metavar="N", help=f"random seed (default: {DEFAULTS.seed})")


def _add_transport(p) -> None:
    p.add_argument("--batch-size", dest="batch_size", type=int, metavar="N",
                   help=f"records per log batch (default: {DEFAULTS.batch_size})")
    p.add_argument("--flush-ms", dest="flush_ms", type=int, metavar="MS",
                   help=f"flush interval for partial batches (default: {DEFAULTS.flush_ms})")


def _add_analysis(p) -> None:
    p.add_argument("--slot-ms", dest="slot_ms", type=int, metavar="MS",
                   help=f"state slot width (default: {DEFAULTS.slot_ms})")
    p.add_argument("--epsilon", type=float, help=f"smoothing constant (default: {DEFAULTS.epsilon})")
    p.add_argument("--tau", type=float,
                   help="anomaly probability threshold (default: half the smallest training transition probability)")
    p.add_argument("--window", type=int, metavar="SLOTS",
                   help=f"tamper detection window (default: {DEFAULTS.window})")
    p.add_argument("--ratio", type=float, help=f"tamper contradiction ratio (default: {DEFAULTS.ratio})")
    p.add_argument("--train-fraction", dest="train_fraction", type=float,
                   help=f"share of benign runs used for training (default: {DEFAULTS.train_fraction})")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _err(message)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="iotforensics", description="Forensic logging and analysis for smart-home apps.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("instrument", help="add forensic log statements to an app")
    p.add_argument("input", help="app source file (.groovy)")
    p.add_argument("-o", "--output", metavar="FILE", help="write the instrumented app here (default: stdout)")
    p.add_argument("--report", metavar="FILE", help="write the JSON instrumentation report here (default: none)")
    p.set_defaults(func=cmd_instrument)

    p = sub.add_parser("simulate", help="run a scenario and collect its forensic logs")
    _add_config(p)
    _add_scenario(p)
    _add_transport(p)
    p.add_argument("--inject", action="append", metavar="THREAT[:k=v,...]",
                   help="inject a threat, e.g. Activity-4:day=0,at=20:45 (repeatable; default: none)")
    p.add_argument("-o", "--output", metavar="FILE", help="write the logs as NDJSON here (default: not written)")
    p.add_argument("--truth", metavar="FILE", help="write the injected ground truth as JSON here (default: none)")
    p.add_argument("--data-dir", dest="data_dir", metavar="DIR", help="also append the batches to this log store (default: none)")
    p.add_argument("--url", help="also POST the batches to a running log service at this base URL (default: none)")
    p.add_argument("--run-id", dest="run_id", help="name for this run (default: <scenario>-<seed>)")
    p.add_argument("--plain", action="store_true", help="run the apps without instrumentation (default: off)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="serve the log store over HTTP")
    _add_config(p)
    p.add_argument("--data-dir", dest="data_dir", metavar="DIR", help=f"store directory (default: ${DATA_DIR_ENV})")
    p.add_argument("--host", default="127.0.0.1", help="bind address (default: 127.0.0.1)")
    p.add_argument("--port", type=int, default=8080, help="port (default: 8080)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("ingest", help="load NDJSON log files into a log store")
    _add_config(p)
    p.add_argument("files", nargs="+", help="NDJSON log files (default: read --data-dir)")
    p.add_argument("--data-dir", dest="data_dir", metavar="DIR", help=f"store directory (default: ${DATA_DIR_ENV})")
    p.add_argument("--url", help="POST to a running log service instead of writing a directory (default: none)")
    p.add_argument("--batch-size", dest="batch_size", type=int, metavar="N",
                   help=f"records per batch for records without a batch id (default: {DEFAULTS.batch_size})")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train the state model from benign logs")
    _add_config(p)
    _add_scenario(p)
    _add_analysis(p)
    _add_transport(p)
    p.add_argument("--logs", nargs="+", metavar="FILE", help="benign NDJSON logs (default: simulate --runs runs)")
    p.add_argument("--runs", type=int, default=22, help="benign runs to simulate when no logs are given (default: 22)")
    p.add_argument("-o", "--model", dest="model", metavar="FILE", help="model output file (default: model.json)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="detect threats in logs with a trained model")
    _add_config(p)
    p.add_argument("--model", metavar="FILE", help="trained model file (required unless set in the config)")
    p.add_argument("--policy", metavar="FILE", help="security policy YAML (default: the policy stored in the model)")
    p.add_argument("--logs", nargs="+", metavar="FILE", help="NDJSON log files (default: read --data-dir)")
    p.add_argument("--data-dir", dest="data_dir", metavar="DIR", help="read logs from this store instead (default: none)")
    p.add_argument("--from", dest="ts_from", type=int, metavar="MS", help="first timestamp, inclusive (default: start)")
    p.add_argument("--to", dest="ts_to", type=int, metavar="MS", help="last timestamp, exclusive (default: end)")
    p.add_argument("--tau", type=float, help="override the model's anomaly threshold (default: stored value)")
    p.add_argument("--run-id", dest="run_id", help="run name for the detections (default: first log file's stem)")
    p.add_argument("--no-tamper", dest="no_tamper", action="store_true",
                   help="skip Behavior-1 detections from device cooperation (default: off)")
    p.add_argument("-o", "--output", metavar="FILE", help="write the JSON analysis report here (default: none)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("evaluate", help="score analysis reports against simulator ground truth")
    p.add_argument("--detections", nargs="+", required=True, metavar="FILE", help="analysis reports from `analyze`")
    p.add_argument("--truth", nargs="+", required=True, metavar="FILE",
                   help="truth files from `simulate --truth`; files without labels are benign runs. "
                        "With as many truth files as reports they pair up by position, otherwise by run name")
    p.add_argument("-o", "--output", metavar="FILE", help="write the JSON metrics document here (default: none)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("e2e", help="instrument, simulate, train, detect and score in one go")
    _add_config(p)
    _add_scenario(p)
    _add_analysis(p)
    _add_transport(p)
    p.add_argument("--apps-dir", dest="apps_dir", metavar="DIR",
                   help="app corpus measured for instrumentation overhead (default: bundled apps)")
    p.add_argument("--benign", type=int, default=30, help="benign runs (default: 30)")
    p.add_argument("--threats", type=int, default=50, help="threat-injected runs (default: 50)")
    p.add_argument("--classes", nargs="+", metavar="CLASS", help="threat classes to inject (default: all ten)")
    p.add_argument("-o", "--output", metavar="FILE", help="write the JSON report here (default: stdout)")
    p.set_defaults(func=cmd_e2e)

    p = sub.add_parser("report", help="print a readable summary of a JSON report")
    p.add_argument("input", help="report written by instrument, analyze, evaluate or e2e")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, UsageError, ConfigError) as exc:
        _err(str(exc))
        return 2
    except StageFailed as exc:
        _err(str(exc))
        return 1
    except DATA_ERRORS as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
