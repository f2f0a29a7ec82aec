"""Forensic instrumentation of smart apps.

Pipeline: parse -> build_icfg -> detect_points -> insert_logs -> emit.
Every inserted statement has the shape ``log.iotdots("<Label>: <name>=${expr}")``.
"""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field

from .frontend import ast as A
from .frontend.classify import CallKind, classify_call, is_iotdots_log
from .frontend.emitter import emit, emit_expr
from .frontend.lexer import SourceUnit, tokenize
from .frontend.parser import parse

PROLOGUE = "// instrumented-by: iotdots"


class GraphError(Exception):
    pass


class AlreadyInstrumented(Exception):
    pass


class Category(enum.Enum):
    EVENT = "Event"
    ACTION = "Action"
    USER_INPUT = "UserInput"
    DEVICE_INFO = "DeviceInfo"
    TIME_LOCATION = "TimeLocation"
    SINK_INTERNET = "SinkInternet"
    SINK_MESSAGE = "SinkMessage"


CATEGORY_ORDER = {c: i for i, c in enumerate(Category)}

# message labels understood by the log parser; recipients get their own wording
RECIPIENT_LABEL = "New recipient defined"
LABELS = {c.value: c for c in Category}
LABELS[RECIPIENT_LABEL] = Category.USER_INPUT


# -- ICFG -------------------------------------------------------------------

@dataclass(frozen=True)
class IcfgNode:
    id: int
    kind: str  # entry | exit | stmt | join | input
    method: str | None
    loc: tuple
    stmt: object = None


@dataclass
class Icfg:
    nodes: dict[int, IcfgNode] = field(default_factory=dict)
    edges: set[tuple[int, int]] = field(default_factory=set)
    entries: dict[str, int] = field(default_factory=dict)
    exits: dict[str, int] = field(default_factory=dict)
    call_edges: set[tuple[int, int]] = field(default_factory=set)
    # installed/updated evaluate the preference inputs
    config_edges: set[tuple[int, int]] = field(default_factory=set)
    handlers: dict[str, list[int]] = field(default_factory=dict)
    method_entries: dict[str, int] = field(default_factory=dict)
    dead: set[int] = field(default_factory=set)

    def successors(self, node: int) -> list[int]:
        out = [b for a, b in self.edges if a == node]
        out += [b for a, b in self.call_edges if a == node]
        out += [b for a, b in self.config_edges if a == node]
        return sorted(out)

    def reachable(self) -> set[int]:
        adj: dict[int, list[int]] = defaultdict(list)
        for a, b in self.edges | self.call_edges | self.config_edges:
            adj[a].append(b)
        seen = set(self.entries.values())
        stack = list(seen)
        while stack:
            n = stack.pop()
            for m in adj[n]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return seen


def _handler_name(call: A.Call) -> tuple[str | None, A.Expr | None]:
    """Handler argument of subscribe/runIn/schedule: last positional arg."""
    pos = call.positional
    if not pos:
        return None, None
    ref = pos[-1]
    if isinstance(ref, A.Name):
        return ref.id, ref
    if isinstance(ref, A.Literal) and isinstance(ref.value, str):
        return ref.value, ref
    return None, ref


def _calls_in(stmt) -> list[A.Call]:
    out = []
    for expr in A.stmt_exprs(stmt):
        out.extend(n for n in A.walk_expr(expr) if isinstance(n, A.Call))
    return out


def build_icfg(ast: A.SmartAppAst) -> Icfg:
    g = Icfg()
    next_id = 0

    def new(kind: str, method: str | None, loc: tuple, stmt=None) -> int:
        nonlocal next_id
        node = IcfgNode(next_id, kind, method, loc, stmt)
        g.nodes[node.id] = node
        next_id += 1
        return node.id

    # preference inputs, chained in document order
    input_nodes: list[int] = []

    def visit_inputs(items, item_idx: int, sec_idx: int, path: tuple) -> None:
        for i, it in enumerate(items):
            if isinstance(it, A.InputDecl):
                input_nodes.append(new("input", None, (item_idx, sec_idx) + path + (i,), it))
                if it.children:
                    visit_inputs(it.children, item_idx, sec_idx, path + (i,))

    for item_idx, item in enumerate(ast.items):
        if isinstance(item, A.Preferences):
            for sec_idx, sec in enumerate(item.items):
                if isinstance(sec, A.Section):
                    visit_inputs(sec.body, item_idx, sec_idx, ())
    for a, b in zip(input_nodes, input_nodes[1:]):
        g.edges.add((a, b))

    pending_calls: list[tuple[int, A.Call]] = []

    def build_block(body, method: str, loc: tuple, preds: list[int], exit_id: int) -> list[int]:
        """Link statements of ``body``; return the dangling predecessors after the block."""
        for i, stmt in enumerate(body):
            if isinstance(stmt, A.Comment):
                continue
            sloc = loc + (i,)
            nid = new("stmt", method, sloc, stmt)
            for p in preds:
                g.edges.add((p, nid))
            for call in _calls_in(stmt):
                pending_calls.append((nid, call))
            if isinstance(stmt, A.If):
                join = new("join", method, sloc + ("join",))
                then_out = build_block(stmt.then, method, sloc + ("then",), [nid], exit_id)
                if stmt.orelse is not None:
                    else_out = build_block(stmt.orelse, method, sloc + ("orelse",), [nid], exit_id)
                else:
                    else_out = [nid]
                for p in then_out + else_out:
                    g.edges.add((p, join))
                preds = [join]
            elif isinstance(stmt, A.Return):
                g.edges.add((nid, exit_id))
                preds = []
            else:
                preds = [nid]
        return preds

    for item_idx, item in enumerate(ast.items):
        if not isinstance(item, A.MethodDecl):
            continue
        entry = new("entry", item.name, (item_idx,))
        exit_id = new("exit", item.name, (item_idx, "exit"))
        g.method_entries[item.name] = entry
        g.exits[item.name] = exit_id
        for p in build_block(item.body, item.name, (item_idx,), [entry], exit_id):
            g.edges.add((p, exit_id))

    for name in A.LIFECYCLE:
        if name not in g.method_entries:
            entry = new("entry", name, (None, name))
            exit_id = new("exit", name, (None, name, "exit"))
            g.edges.add((entry, exit_id))
            g.method_entries[name] = entry
            g.exits[name] = exit_id
        g.entries[name] = g.method_entries[name]

    for nid, call in pending_calls:
        kind = classify_call(call, ast)
        if kind is CallKind.SUBSCRIPTION:
            handler, ref = _handler_name(call)
            if handler is None or handler not in g.method_entries or len(call.positional) < 2:
                raise GraphError(f"subscription names undeclared handler {handler or emit_expr(ref) if ref else '?'}")
            g.entries.setdefault(handler, g.method_entries[handler])
            g.handlers.setdefault(handler, []).append(nid)
            g.call_edges.add((nid, g.method_entries[handler]))
        elif kind is CallKind.METHOD:
            g.call_edges.add((nid, g.method_entries[call.callee]))
        elif kind is CallKind.SCHEDULE and call.callee != "unschedule":
            handler, _ = _handler_name(call)
            if handler in g.method_entries:
                g.call_edges.add((nid, g.method_entries[handler]))

    if input_nodes:
        for name in ("installed", "updated"):
            g.config_edges.add((g.entries[name], input_nodes[0]))

    g.dead = set(g.nodes) - g.reachable()
    return g


# -- forensic points ----------------------------------------------------------

@dataclass(frozen=True)
class ForensicPoint:
    category: Category
    node_id: int
    payload: A.GString
    site: str  # entry | before | after | section-end
    loc: tuple
    name: str = ""

    @property
    def message(self) -> str:
        return emit_expr(self.payload)

    def key(self) -> tuple[str, str]:
        return self.category.value, self.message


def _pure(expr: A.Expr) -> bool:
    return not any(isinstance(n, A.Call) for n in A.walk_expr(expr))


def _value_parts(exprs: list[A.Expr]) -> list:
    """Interpolation parts for argument values; impure args are logged as source text."""
    parts: list = []
    for i, e in enumerate(exprs):
        if i:
            parts.append(",")
        if isinstance(e, A.Literal):
            parts.append(_literal_text(e.value))
        elif _pure(e):
            parts.append(e)
        else:
            parts.append(emit_expr(e))
    return parts


def _literal_text(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _gstring(*parts) -> A.GString:
    merged: list = []
    for p in parts:
        if isinstance(p, str) and merged and isinstance(merged[-1], str):
            merged[-1] += p
        else:
            if not isinstance(p, str) and (not merged or not isinstance(merged[-1], str)):
                merged.append("")
            merged.append(p)
    if not merged or not isinstance(merged[-1], str):
        merged.append("")
    if not isinstance(merged[0], str):
        merged.insert(0, "")
    return A.GString(tuple(merged))


def _input_payload(decl: A.InputDecl, category: Category) -> A.GString:
    ref = A.Name(decl.name)
    if category is Category.USER_INPUT and decl.kind in (A.InputKind.CONTACT, A.InputKind.PHONE):
        return _gstring(f"{RECIPIENT_LABEL}: ", ref)
    return _gstring(f"{category.value}: {decl.name}=", ref)


def _references_location(stmt) -> bool:
    for expr in A.stmt_exprs(stmt):
        for n in A.walk_expr(expr):
            if isinstance(n, A.Name) and n.id == "location":
                return True
            if isinstance(n, A.Call) and n.callee == "now":
                return True
    return False


def detect_points(icfg: Icfg, ast: A.SmartAppAst) -> list[ForensicPoint]:
    points: list[ForensicPoint] = []
    for nid in sorted(icfg.nodes):
        node = icfg.nodes[nid]
        if node.kind == "input":
            decl: A.InputDecl = node.stmt
            sec_loc = node.loc[:2]
            points.append(ForensicPoint(Category.USER_INPUT, nid,
                                        _input_payload(decl, Category.USER_INPUT),
                                        "section-end", sec_loc, decl.name))
            if decl.is_device:
                points.append(ForensicPoint(Category.DEVICE_INFO, nid,
                                            _input_payload(decl, Category.DEVICE_INFO),
                                            "section-end", sec_loc, decl.name))
        elif node.kind == "entry" and node.method in icfg.handlers and node.loc[0] is not None:
            method = ast.items[node.loc[0]]
            if method.params:
                evt = A.Name(method.params[0])
                payload = _gstring("Event: ", A.Member(evt, "deviceId"), ".", A.Member(evt, "name"),
                                   "=", A.Member(evt, "value"))
            else:
                payload = _gstring(f"Event: {method.name}=fired")
            points.append(ForensicPoint(Category.EVENT, nid, payload, "entry", node.loc, method.name))
        elif node.kind == "stmt":
            points.extend(_stmt_points(node, ast))
    points.sort(key=lambda p: (p.node_id, CATEGORY_ORDER[p.category]))
    return points


def _stmt_points(node: IcfgNode, ast: A.SmartAppAst) -> list[ForensicPoint]:
    stmt = node.stmt
    calls = _calls_in(stmt)
    if any(is_iotdots_log(c) for c in calls):
        return []
    after = "before" if isinstance(stmt, A.Return) else "after"
    out = []
    for call in calls:
        kind = classify_call(call, ast)
        if kind is CallKind.DEVICE_COMMAND:
            device = call.func.obj
            command = call.func.name
            payload = _gstring(f"Action: ", device, f".{command}=", *_value_parts(call.positional))
            out.append(ForensicPoint(Category.ACTION, node.id, payload, after, node.loc, command))
        elif kind is CallKind.MESSAGE:
            first = call.positional[:1]
            payload = _gstring(f"SinkMessage: {call.callee}=", *_value_parts(first))
            out.append(ForensicPoint(Category.SINK_MESSAGE, node.id, payload, after, node.loc, call.callee))
        elif kind is CallKind.HTTP:
            first = call.positional[:1] or [v for v in (call.named("uri"),) if v is not None]
            payload = _gstring(f"SinkInternet: {call.callee}=", *_value_parts(first))
            out.append(ForensicPoint(Category.SINK_INTERNET, node.id, payload, after, node.loc, call.callee))
        elif kind is CallKind.SCHEDULE:
            first = call.positional[:1]
            payload = _gstring(f"TimeLocation: {call.callee}=", *_value_parts(first))
            out.append(ForensicPoint(Category.TIME_LOCATION, node.id, payload, "before", node.loc, call.callee))
    if _references_location(stmt) and not any(p.category is Category.TIME_LOCATION for p in out):
        payload = _gstring("TimeLocation: mode=", A.Member(A.Name("location"), "mode"))
        out.append(ForensicPoint(Category.TIME_LOCATION, node.id, payload, "before", node.loc, "mode"))
    return out


# -- rewriting ----------------------------------------------------------------

def log_statement(point: ForensicPoint) -> A.ExprStmt:
    call = A.Call(A.Member(A.Name("log"), "iotdots"), (A.Arg(None, point.payload),), True)
    return A.ExprStmt(call)


def is_instrumented(ast: A.SmartAppAst) -> bool:
    if any(isinstance(i, A.Comment) and i.text.strip() == PROLOGUE for i in ast.items):
        return True
    for m in ast.methods:
        for stmt in A.walk_stmts(m.body):
            if any(is_iotdots_log(c) for c in _calls_in(stmt)):
                return True
    for sec in ast.sections:
        for it in sec.body:
            if not isinstance(it, A.InputDecl) and any(is_iotdots_log(c) for c in _calls_in(it)):
                return True
    return False


def insert_logs(ast: A.SmartAppAst, points: list[ForensicPoint]) -> A.SmartAppAst:
    if is_instrumented(ast):
        raise AlreadyInstrumented(f"{ast.origin}: app already contains log.iotdots calls")
    if not points:
        return ast

    section_logs: dict[tuple, list] = defaultdict(list)
    # block location -> index -> (before, after)
    stmt_logs: dict[tuple, dict[int, tuple[list, list]]] = defaultdict(lambda: defaultdict(lambda: ([], [])))
    entry_logs: dict[int, list] = defaultdict(list)
    for p in points:
        log = log_statement(p)
        if p.site == "section-end":
            section_logs[p.loc].append(log)
        elif p.site == "entry":
            entry_logs[p.loc[0]].append(log)
        else:
            block, idx = p.loc[:-1], p.loc[-1]
            before, after = stmt_logs[block][idx]
            (before if p.site == "before" else after).append(log)

    def rewrite_block(body, loc: tuple) -> tuple:
        out = []
        slots = stmt_logs.get(loc, {})
        for i, stmt in enumerate(body):
            before, after = slots.get(i, ([], []))
            out.extend(before)
            if isinstance(stmt, A.If):
                then = rewrite_block(stmt.then, loc + (i, "then"))
                orelse = None if stmt.orelse is None else rewrite_block(stmt.orelse, loc + (i, "orelse"))
                stmt = A.If(stmt.cond, then, orelse, stmt.span)
            out.append(stmt)
            out.extend(after)
        return tuple(out)

    items = []
    for item_idx, item in enumerate(ast.items):
        if isinstance(item, A.MethodDecl):
            body = rewrite_block(item.body, (item_idx,))
            body = tuple(entry_logs.get(item_idx, [])) + body
            item = A.MethodDecl(item.name, item.params, body, item.span)
        elif isinstance(item, A.Preferences):
            subs = []
            for sec_idx, sec in enumerate(item.items):
                extra = section_logs.get((item_idx, sec_idx))
                if extra:
                    sec = A.Section(sec.args, sec.body + tuple(extra), sec.span)
                subs.append(sec)
            item = A.Preferences(tuple(subs), item.span)
        items.append(item)
    return A.SmartAppAst(tuple(items), ast.origin, ast.span)


# -- end to end -----------------------------------------------------------------

@dataclass
class InstrumentationReport:
    origin: str
    points: list[ForensicPoint]
    lines_added: int
    original_lines: int
    bytes_added: int
    prologue_lines: int = 1

    def to_dict(self) -> dict:
        return {
            "origin": self.origin,
            "points": [
                {"category": p.category.value, "node": p.node_id, "site": p.site,
                 "name": p.name, "message": p.message}
                for p in self.points
            ],
            "point_count": len(self.points),
            "lines_added": self.lines_added,
            "prologue_lines": self.prologue_lines,
            "original_lines": self.original_lines,
            "bytes_added": self.bytes_added,
        }


def instrument(src: SourceUnit | str) -> tuple[SourceUnit, InstrumentationReport]:
    if isinstance(src, str):
        src = SourceUnit(src)
    ast = parse(tokenize(src), src.origin)
    if is_instrumented(ast):
        raise AlreadyInstrumented(f"{src.origin}: app is already instrumented")
    icfg = build_icfg(ast)
    points = detect_points(icfg, ast)
    modified = insert_logs(ast, points)
    modified = A.SmartAppAst((A.Comment(PROLOGUE),) + modified.items, modified.origin, modified.span)
    out = emit(modified)
    baseline = emit(ast).text
    report = InstrumentationReport(
        origin=src.origin,
        points=points,
        lines_added=out.text.count("\n") - baseline.count("\n"),
        original_lines=len(src.text.splitlines()),
        bytes_added=len(out.text.encode()) - len(baseline.encode()),
    )
    return out, report
