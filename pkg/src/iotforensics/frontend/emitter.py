"""Canonical source emission (4-space indent, double-quoted strings)."""
from __future__ import annotations

from .ast import (
    Arg, Assign, BinOp, Call, Comment, Compare, Definition, Expr, ExprStmt,
    GString, If, InputDecl, ListLit, Literal, Member, MethodDecl, Name,
    Preferences, Return, Section, SmartAppAst, Unary,
)
from .lexer import SourceUnit

INDENT = "    "

_PREC = {
    "||": 1, "&&": 2,
    "==": 3, "!=": 3, "<": 3, ">": 3, "<=": 3, ">=": 3,
    "+": 4, "-": 4, "*": 5, "/": 5, "%": 5,
}


def quote(text: str) -> str:
    escaped = (text.replace("\\", "\\\\").replace('"', '\\"').replace("$", "\\$")
               .replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r"))
    return f'"{escaped}"'


def _literal(value) -> str:
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, str):
        return quote(value)
    return repr(value)


def emit_expr(expr: Expr, parent_prec: int = 0, right: bool = False) -> str:
    if isinstance(expr, Literal):
        return _literal(expr.value)
    if isinstance(expr, Name):
        return expr.id
    if isinstance(expr, Member):
        return f"{emit_expr(expr.obj, 99)}.{expr.name}"
    if isinstance(expr, Call):
        args = ", ".join(emit_arg(a) for a in expr.args)
        func = emit_expr(expr.func, 99)
        if expr.parens:
            return f"{func}({args})"
        return f"{func} {args}" if args else func
    if isinstance(expr, GString):
        out = ['"']
        for part in expr.parts:
            if isinstance(part, str):
                out.append(quote(part)[1:-1])
            else:
                out.append("${" + emit_expr(part) + "}")
        out.append('"')
        return "".join(out)
    if isinstance(expr, (BinOp, Compare)):
        prec = _PREC[expr.op]
        text = f"{emit_expr(expr.left, prec)} {expr.op} {emit_expr(expr.right, prec, right=True)}"
        # left-assoc: a right operand of equal precedence needs parens
        if prec < parent_prec or (right and prec == parent_prec):
            return f"({text})"
        return text
    if isinstance(expr, Unary):
        inner = emit_expr(expr.operand, 98)
        return f"{expr.op}{inner}"
    if isinstance(expr, ListLit):
        return "[" + ", ".join(emit_expr(e) for e in expr.items) + "]"
    raise TypeError(f"cannot emit {type(expr).__name__}")


def emit_arg(arg: Arg) -> str:
    value = emit_expr(arg.value)
    if arg.name is None:
        return value
    key = arg.name if arg.name.isidentifier() else quote(arg.name)
    return f"{key}: {value}"


class _Writer:
    def __init__(self) -> None:
        self.lines: list[str] = []

    def line(self, depth: int, text: str) -> None:
        self.lines.append(INDENT * depth + text)

    def comment(self, depth: int, text: str) -> None:
        for i, piece in enumerate(text.split("\n")):
            self.lines.append((INDENT * depth if i == 0 else "") + piece)

    def stmts(self, body, depth: int) -> None:
        for stmt in body:
            self.stmt(stmt, depth)

    def stmt(self, stmt, depth: int) -> None:
        if isinstance(stmt, Comment):
            self.comment(depth, stmt.text)
        elif isinstance(stmt, ExprStmt):
            self.line(depth, emit_expr(stmt.expr))
        elif isinstance(stmt, Assign):
            prefix = "def " if stmt.declare else ""
            if stmt.declare and isinstance(stmt.value, Literal) and stmt.value.value is None:
                self.line(depth, f"{prefix}{emit_expr(stmt.target)}")
            else:
                self.line(depth, f"{prefix}{emit_expr(stmt.target)} = {emit_expr(stmt.value)}")
        elif isinstance(stmt, Return):
            self.line(depth, "return" if stmt.value is None else f"return {emit_expr(stmt.value)}")
        elif isinstance(stmt, If):
            self._if(stmt, depth, "if")
        elif isinstance(stmt, InputDecl):
            self.input(stmt, depth)
        else:
            raise TypeError(f"cannot emit {type(stmt).__name__}")

    def _if(self, stmt: If, depth: int, head: str) -> None:
        if head == "if":
            self.line(depth, f"if ({emit_expr(stmt.cond)}) {{")
        else:
            self.lines[-1] += f" else if ({emit_expr(stmt.cond)}) {{"
        self.stmts(stmt.then, depth + 1)
        self.line(depth, "}")
        if stmt.orelse is None:
            return
        if len(stmt.orelse) == 1 and isinstance(stmt.orelse[0], If):
            self._if(stmt.orelse[0], depth, "else if")
            return
        self.lines[-1] += " else {"
        self.stmts(stmt.orelse, depth + 1)
        self.line(depth, "}")

    def input(self, decl: InputDecl, depth: int) -> None:
        args = [quote(decl.name), quote(decl.input_type)] + [emit_arg(a) for a in decl.options]
        joined = ", ".join(args)
        head = f"input({joined})" if decl.parens else f"input {joined}"
        if decl.children is None:
            self.line(depth, head)
            return
        self.line(depth, head + " {")
        self.stmts(decl.children, depth + 1)
        self.line(depth, "}")

    def section(self, section: Section, depth: int) -> None:
        args = ", ".join(emit_arg(a) for a in section.args)
        self.line(depth, f"section({args}) {{")
        self.stmts(section.body, depth + 1)
        self.line(depth, "}")

    def item(self, item) -> None:
        if isinstance(item, Comment):
            self.comment(0, item.text)
        elif isinstance(item, Definition):
            self.line(0, f"definition({', '.join(emit_arg(a) for a in item.args)})")
        elif isinstance(item, Preferences):
            self.line(0, "preferences {")
            for sub in item.items:
                if isinstance(sub, Comment):
                    self.comment(1, sub.text)
                else:
                    self.section(sub, 1)
            self.line(0, "}")
        elif isinstance(item, MethodDecl):
            self.line(0, f"def {item.name}({', '.join(item.params)}) {{")
            self.stmts(item.body, 1)
            self.line(0, "}")
        else:
            raise TypeError(f"cannot emit {type(item).__name__}")


def emit(ast: SmartAppAst) -> SourceUnit:
    w = _Writer()
    prev = None
    for item in ast.items:
        # blank line between top-level declarations, none after a leading comment
        if prev is not None and not isinstance(prev, Comment):
            w.lines.append("")
        w.item(item)
        prev = item
    text = "\n".join(w.lines) + "\n" if w.lines else ""
    return SourceUnit(text, ast.origin)
