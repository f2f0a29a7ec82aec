from __future__ import annotations

import re
from collections import Counter

import pytest

from iotforensics.frontend import emit, parse_source
from iotforensics.frontend.ast import If, MethodDecl
from iotforensics.instrumenter import (
    PROLOGUE, AlreadyInstrumented, Category, GraphError, build_icfg, detect_points, insert_logs, instrument,
)

from conftest import fixture_text

HANDLER_APP = '''
preferences {
    section("s") {
        input "t1", "capability.temperatureMeasurement", title: "T"
        input "light1", "capability.switch", title: "L"
    }
}
def installed() {
}
def updated() {
}
def initialize() {
    subscribe(t1, "temperature", handler)
}
def handler(evt) {
    if (evt.doubleValue > 70) {
        light1.on()
    } else {
        light1.off()
    }
}
'''


def _method_of(g, node_id):
    return g.nodes[node_id].method


def test_icfg_entries_and_branch_rejoin():
    g = build_icfg(parse_source(HANDLER_APP))
    assert set(g.entries) == {"installed", "updated", "initialize", "handler"}
    [branch] = [n for n in g.nodes.values() if n.kind == "stmt" and isinstance(n.stmt, If)]
    succ = [m for a, m in g.edges if a == branch.id]
    assert len(succ) == 2
    [join] = [n for n in g.nodes.values() if n.kind == "join"]
    into_join = [a for a, b in g.edges if b == join.id]
    assert len(into_join) == 2 and set(into_join) == set(succ)


def test_icfg_empty_app():
    g = build_icfg(parse_source(fixture_text("empty.groovy")))
    assert set(g.entries) == {"installed", "updated", "initialize"}
    assert g.handlers == {} and g.call_edges == set()


def test_icfg_shared_helper_matches_hand_drawn_graph(manifest):
    want = manifest["shared_helper_graph"]
    g = build_icfg(parse_source(fixture_text("shared-helper.groovy")))
    assert sorted(g.entries) == want["entries"]
    by_entry = {v: k for k, v in g.method_entries.items()}
    got = sorted((_method_of(g, a), by_entry[b]) for a, b in g.call_edges)
    assert got == sorted(tuple(e) for e in want["call_edges"])
    assert sum(1 for _, b in g.call_edges if b == g.method_entries["lightOn"]) == 2


def test_icfg_nodes_reachable_or_dead(corpus):
    for name, src in corpus.items():
        g = build_icfg(parse_source(src))
        assert set(g.nodes) <= g.reachable() | g.dead, name
        for _, callee in g.call_edges:
            assert callee in g.method_entries.values()


def test_undeclared_handler_is_a_graph_error():
    src = 'def installed() {\n    subscribe(location, "mode", nowhere)\n}\n'
    with pytest.raises(GraphError):
        build_icfg(parse_source(src))


def test_notify_section_points_are_two_user_inputs():
    ast = parse_source(fixture_text("notify-section.groovy"))
    points = detect_points(build_icfg(ast), ast)
    assert [(p.category, p.name) for p in points] == [(Category.USER_INPUT, "recipients"),
                                                      (Category.USER_INPUT, "phone")]


def test_no_points_in_empty_app():
    ast = parse_source(fixture_text("empty.groovy"))
    assert detect_points(build_icfg(ast), ast) == []


def test_point_multisets_match_manifest(corpus, manifest):
    for name, want in manifest["apps"].items():
        ast = parse_source(corpus[name])
        got = Counter(p.category.value for p in detect_points(build_icfg(ast), ast))
        assert dict(got) == want["points"], name


def test_points_are_sorted_and_deterministic(corpus):
    for src in corpus.values():
        ast = parse_source(src)
        a = detect_points(build_icfg(ast), ast)
        assert a == detect_points(build_icfg(ast), ast)
        assert [p.node_id for p in a] == sorted(p.node_id for p in a)


def test_notify_section_gets_phone_log_inside_section():
    out, report = instrument(fixture_text("notify-section.groovy"))
    text = out.text
    assert text.startswith(PROLOGUE)
    phone_logs = re.findall(r'log\.iotdots\("[^"]*\$\{phone\}"\)', text)
    assert phone_logs == ['log.iotdots("New recipient defined: ${phone}")']
    section = text[text.index("section("):text.rindex("}")]
    assert phone_logs[0] in section
    assert text.index(phone_logs[0]) > text.index('input "phone"')
    assert report.lines_added == len(report.points) + 1


def test_emitting_one_inserted_log():
    ast = parse_source(fixture_text("notify-section.groovy"))
    points = detect_points(build_icfg(ast), ast)
    phone = [p for p in points if p.name == "phone"]
    text = emit(insert_logs(ast, phone)).text
    assert text.count("log.iotdots(") == 1


def test_insert_nothing_is_identity(corpus):
    ast = parse_source(corpus["smart-lights"])
    assert insert_logs(ast, []) == ast


def test_double_instrumentation_refused(corpus):
    once, _ = instrument(corpus["notify-me"])
    with pytest.raises(AlreadyInstrumented):
        instrument(once)


def test_reinstrumented_points_match(corpus):
    for name, src in corpus.items():
        ast = parse_source(src)
        before = Counter((p.category, p.name) for p in detect_points(build_icfg(ast), ast))
        out, _ = instrument(src)
        again = parse_source(out)
        after = Counter((p.category, p.name) for p in detect_points(build_icfg(again), again))
        assert after == before, name


def test_empty_app_adds_only_prologue():
    out, report = instrument(fixture_text("empty.groovy"))
    assert report.lines_added == 1 and report.points == []
    assert out.text.splitlines()[0] == PROLOGUE


def test_payload_format_and_action_after_command(corpus):
    out, _ = instrument(corpus["smart-lights"])
    lines = [ln.strip() for ln in out.text.splitlines()]
    on = lines.index("light1.on()")
    assert lines[on + 1].startswith('log.iotdots("Action: ${light1}.on=')
    assert any(ln.startswith('log.iotdots("UserInput: delay=${delay}') for ln in lines)


def test_report_counts_match_diff(corpus):
    for name, src in corpus.items():
        out, report = instrument(src)
        assert report.lines_added == len(report.points) + report.prologue_lines == len(report.points) + 1
        assert out.text.count("log.iotdots(") == len(report.points)
        assert report.bytes_added == len(out.text.encode()) - len(emit(parse_source(src)).text.encode())
        assert report.original_lines == len(src.text.splitlines())


def test_helper_methods_are_not_event_points():
    ast = parse_source(fixture_text("shared-helper.groovy"))
    events = [p.name for p in detect_points(build_icfg(ast), ast) if p.category is Category.EVENT]
    assert sorted(events) == ["doorHandler", "motionHandler"]
    assert isinstance(ast.method("lightOn"), MethodDecl)
