from __future__ import annotations

import json
import subprocess
import sys

import pytest

from iotforensics.cli import UsageError, batches_for, build_parser, main, parse_injection, render_report
from iotforensics.logstore import LogRecord, LogStore

from conftest import FIXTURES

SUBCOMMANDS = ("instrument", "simulate", "serve", "ingest", "train", "analyze", "evaluate", "e2e", "report")


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "iotforensics.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "instrument" in proc.stdout


@pytest.mark.parametrize("name", SUBCOMMANDS)
def test_help_documents_defaults(name, capsys):
    with pytest.raises(SystemExit) as exc:
        main([name, "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for action in build_parser()._subparsers._group_actions[0].choices[name]._actions:
        if action.option_strings and action.dest != "help" and not action.required:
            assert action.help and ("default" in action.help or action.const is not None or "required" in action.help), \
                action.dest
    assert out.startswith("usage:")


def test_exit_codes(tmp_path, capsys):
    assert main(["instrument", str(tmp_path / "missing.groovy")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2
    instrumented = tmp_path / "inst.groovy"
    assert main(["instrument", str(FIXTURES / "notify-section.groovy"), "-o", str(instrumented)]) == 0
    assert main(["instrument", str(instrumented)]) == 1
    assert "AlreadyInstrumented" in capsys.readouterr().err
    assert main(["simulate", "--days", "1", "--inject", "Activity-9"]) == 1
    assert main(["simulate", "--days", "1", "--inject", "Behavior-1:k=99"]) == 1
    bad_model = tmp_path / "model.json"
    bad_model.write_text("{}")
    assert main(["analyze", "--model", str(bad_model), "--logs", str(bad_model)]) == 1


def test_instrument_to_stdout_and_report(tmp_path, capsys):
    report = tmp_path / "r.json"
    assert main(["instrument", str(FIXTURES / "notify-section.groovy"), "--report", str(report)]) == 0
    captured = capsys.readouterr()
    assert captured.out.startswith("// instrumented-by: iotdots")
    assert 'log.iotdots("New recipient defined: ${phone}")' in captured.out
    doc = json.loads(report.read_text())
    assert doc["lines_added"] == doc["point_count"] + 1
    assert "points" in render_report(doc)


def test_parse_injection():
    assert parse_injection("Activity-5:at=20:45") == ("Activity-5", {"at": "20:45"})
    name, params = parse_injection("Behavior-1:devices=a|b,day=2,duration=null")
    assert name == "Behavior-1" and params == {"devices": ["a", "b"], "day": 2, "duration": None}
    with pytest.raises(UsageError):
        parse_injection("Activity-1:oops")


def test_loose_records_reingest_as_noop(tmp_path):
    records = [LogRecord(i * 10, "app", i + 1, "Event", "m1", "motion", "active") for i in range(25)]
    batches = batches_for(records, 10)
    assert [len(b.records) for b in batches] == [10, 10, 5]
    assert batches_for(records, 10) == batches
    store = LogStore(tmp_path)
    for b in batches + batches:
        store.append_batch(b)
    assert len(store.query()) == 25


def test_train_analyze_evaluate_flow(tmp_path, capsys):
    model, logs, truth = tmp_path / "m.json", tmp_path / "a5.ndjson", tmp_path / "a5.truth.json"
    analysis, metrics = tmp_path / "an.json", tmp_path / "metrics.json"
    assert main(["train", "--runs", "3", "--days", "7", "-o", str(model)]) == 0
    assert main(["simulate", "--days", "7", "--seed", "9", "--inject", "Activity-5:at=20:45",
                 "-o", str(logs), "--truth", str(truth)]) == 0
    assert main(["analyze", "--model", str(model), "--logs", str(logs), "-o", str(analysis)]) == 0
    doc = json.loads(analysis.read_text())
    assert {"reproduction", "detections", "tamper"} <= set(doc)
    assert any(d["class"] == "Activity-5" for d in doc["detections"])
    assert main(["evaluate", "--detections", str(analysis), "--truth", str(truth), "-o", str(metrics)]) == 0
    assert json.loads(metrics.read_text())["metrics"]["classes"]["Activity-5"]["TP"] >= 1
    assert main(["report", str(analysis)]) == 0
    assert "detections:" in capsys.readouterr().out


def test_e2e_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["e2e", "--benign", "4", "--threats", "0", "--days", "2"]
    assert main(args + ["-o", str(a)]) == 0
    assert main(args + ["-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["metrics"]["classes"] == {}
    assert doc["overhead"]["apps"] and doc["reproduction"]["config_hash"]
