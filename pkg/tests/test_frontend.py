from __future__ import annotations

import re

import pytest
from hypothesis import given, settings, strategies as st

from iotforensics.frontend import (
    FrontendError, InputKind, LexError, ParseError, SourceUnit, TokenKind, emit, parse, parse_source, tokenize,
)
from iotforensics.frontend.ast import walk_stmts

from conftest import fixture_text

PHONE_LINE = 'input "phone", "phone", title: "Enter a phone number to get SMS", required: false'


def test_tokenize_phone_input_line():
    toks = tokenize(PHONE_LINE)
    assert (toks[0].kind, toks[0].lexeme) == (TokenKind.KEYWORD, "input")
    assert (toks[1].kind, toks[1].lexeme) == (TokenKind.STRING, '"phone"')
    tail = [(t.kind, t.lexeme) for t in toks[-3:]]
    assert tail == [(TokenKind.IDENT, "required"), (TokenKind.PUNCT, ":"), (TokenKind.KEYWORD, "false")]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokens_reconstruct_text():
    text = fixture_text("shared-helper.groovy")
    toks = tokenize(text)
    for a, b in zip(toks, toks[1:]):
        assert a.span.end <= b.span.start
        assert text[a.span.end:b.span.start].strip() == ""
    assert all(text[t.span.start:t.span.end] == t.lexeme for t in toks)
    assert text[toks[-1].span.end:].strip() == ""


_REFERENCE = re.compile(r"""
    (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<string>"[^"\\\n$]*(?:\\.[^"\\\n$]*)*")
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<word>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<punct>==|!=|<=|>=|&&|\|\||[(){}\[\],:.=<>+\-*/%!;])
  | (?P<space>\s+)
""", re.VERBOSE | re.DOTALL)


def _reference_count(text: str) -> int:
    n = pos = 0
    while pos < len(text):
        m = _REFERENCE.match(text, pos)
        assert m, f"reference lexer stuck at {pos}"
        n += m.lastgroup != "space"
        pos = m.end()
    return n


def test_token_count_matches_reference_lexer():
    sample = 'def h(evt) {  // toggle\n    if (evt.value == "on") { light1.off() }\n    state.n = state.n + 1.5\n}'
    assert len(tokenize(sample)) == _reference_count(sample)


def test_interpolated_segments():
    kinds = [t.kind for t in tokenize('"a ${b} c"')]
    assert kinds == [TokenKind.SEGMENT, TokenKind.IDENT, TokenKind.SEGMENT]


@pytest.mark.parametrize("bad", ['"unterminated', "x = #", '"${a"'])
def test_lex_errors_carry_position(bad):
    with pytest.raises(LexError) as exc:
        tokenize(SourceUnit(bad, "bad.groovy"))
    assert str(exc.value).startswith("bad.groovy:1:")


def test_notify_section_parses_nested_phone_input():
    ast = parse_source(fixture_text("notify-section.groovy"))
    [section] = ast.sections
    [recipients] = [i for i in section.body if getattr(i, "name", None) == "recipients"]
    assert recipients.input_type == "contact" and recipients.kind is InputKind.CONTACT
    assert recipients.title == "Send notifications to"
    [phone] = recipients.children
    assert (phone.name, phone.input_type, phone.required) == ("phone", "phone", False)


def test_empty_app_has_no_inputs_or_subscriptions():
    ast = parse_source(fixture_text("empty.groovy"))
    assert ast.inputs == []
    assert [s for m in ast.methods for s in walk_stmts(m.body)] == []


def _count(ast, callee=None):
    from iotforensics.frontend import CallKind, classify_call
    from iotforensics.frontend.ast import Call, stmt_exprs, walk_expr
    n = 0
    for m in ast.methods:
        for stmt in walk_stmts(m.body):
            for expr in stmt_exprs(stmt):
                for node in walk_expr(expr):
                    if isinstance(node, Call) and classify_call(node, ast) is callee:
                        n += 1
    return n


def test_corpus_counts_match_manifest(corpus, manifest):
    from iotforensics.frontend import CallKind
    assert set(manifest["apps"]) <= set(corpus)
    for name, want in manifest["apps"].items():
        ast = parse_source(corpus[name])
        got = {"inputs": len(ast.inputs), "subscriptions": _count(ast, CallKind.SUBSCRIPTION),
               "commands": _count(ast, CallKind.DEVICE_COMMAND)}
        assert got == {k: want[k] for k in got}, name


def test_round_trip_notify_section():
    ast = parse_source(fixture_text("notify-section.groovy"))
    assert parse_source(emit(ast)) == ast


def test_round_trip_and_idempotent_emit_over_corpus(corpus):
    for name, src in corpus.items():
        ast = parse_source(src)
        once = emit(ast)
        assert parse_source(once) == ast, name
        assert emit(parse_source(once)).text == once.text, name


def test_comments_survive_round_trip():
    text = "// top\ndef installed() {\n    // inside\n    state.x = 1\n}\n"
    assert "// inside" in emit(parse_source(text)).text


def test_parse_error_reports_expected_and_found():
    with pytest.raises(ParseError) as exc:
        parse_source(SourceUnit("def installed( {\n}", "x.groovy"))
    assert str(exc.value).startswith("x.groovy:1:")
    assert "found" in str(exc.value)


def test_spans_slice_contiguous_token_runs(corpus):
    from iotforensics.frontend.ast import MethodDecl
    text = corpus["keep-cool"].text
    toks = [t.lexeme for t in tokenize(text) if t.kind is not TokenKind.COMMENT]
    ast = parse_source(corpus["keep-cool"])
    nodes = [m for m in ast.items if isinstance(m, MethodDecl)]
    nodes += [s for m in nodes for s in walk_stmts(m.body)]
    assert nodes
    for node in nodes:
        piece = [t.lexeme for t in tokenize(text[node.span.start:node.span.end]) if t.kind is not TokenKind.COMMENT]
        assert piece
        starts = [i for i in range(len(toks)) if toks[i:i + len(piece)] == piece]
        assert starts, node


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=200))
def test_parser_is_total_on_arbitrary_bytes(data):
    text = data.decode("utf-8", errors="replace")
    try:
        parse(tokenize(text))
    except FrontendError:
        pass


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(['def', 'h', '(', ')', '{', '}', 'if', '"s"', '${', 'x', '=', '1', '.', ',',
                                 'input', 'section', 'preferences', ':', '\n']), max_size=40))
def test_parser_is_total_on_token_soup(parts):
    try:
        parse_source(" ".join(parts))
    except FrontendError:
        pass
