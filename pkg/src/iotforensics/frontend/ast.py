"""AST node types for the smart-app DSL.

Nodes are frozen dataclasses. Spans are excluded from equality so two trees
compare equal when they are structurally the same, regardless of layout.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Union

from .errors import Span


def _span() -> Span | None:
    return field(default=None, compare=False, repr=False)


# -- expressions ------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: str | int | float | bool | None
    span: Span | None = _span()


@dataclass(frozen=True)
class Name:
    id: str
    span: Span | None = _span()


@dataclass(frozen=True)
class Member:
    obj: "Expr"
    name: str
    span: Span | None = _span()


@dataclass(frozen=True)
class Arg:
    name: str | None
    value: "Expr"
    span: Span | None = _span()


@dataclass(frozen=True)
class Call:
    func: "Expr"
    args: tuple[Arg, ...] = ()
    parens: bool = True
    span: Span | None = _span()

    @property
    def positional(self) -> list["Expr"]:
        return [a.value for a in self.args if a.name is None]

    def named(self, key: str) -> "Expr | None":
        for a in self.args:
            if a.name == key:
                return a.value
        return None

    @property
    def callee(self) -> str:
        """Dotted name of the called function, e.g. ``log.debug`` or ``light1.on``."""
        return dotted(self.func) or "<expr>"


@dataclass(frozen=True)
class GString:
    # alternating str / Expr, always starting and ending with a str
    parts: tuple[Union[str, "Expr"], ...]
    span: Span | None = _span()

    @property
    def exprs(self) -> list["Expr"]:
        return [p for p in self.parts if not isinstance(p, str)]


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    span: Span | None = _span()


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"
    span: Span | None = _span()


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"
    span: Span | None = _span()


@dataclass(frozen=True)
class ListLit:
    items: tuple["Expr", ...]
    span: Span | None = _span()


Expr = Union[Literal, Name, Member, Call, GString, BinOp, Compare, Unary, ListLit]


def dotted(expr: Expr) -> str | None:
    if isinstance(expr, Name):
        return expr.id
    if isinstance(expr, Member):
        base = dotted(expr.obj)
        return None if base is None else f"{base}.{expr.name}"
    return None


def walk_expr(expr: Expr) -> Iterator[Expr]:
    yield expr
    if isinstance(expr, Member):
        yield from walk_expr(expr.obj)
    elif isinstance(expr, Call):
        yield from walk_expr(expr.func)
        for a in expr.args:
            yield from walk_expr(a.value)
    elif isinstance(expr, GString):
        for e in expr.exprs:
            yield from walk_expr(e)
    elif isinstance(expr, (BinOp, Compare)):
        yield from walk_expr(expr.left)
        yield from walk_expr(expr.right)
    elif isinstance(expr, Unary):
        yield from walk_expr(expr.operand)
    elif isinstance(expr, ListLit):
        for e in expr.items:
            yield from walk_expr(e)


# -- statements -------------------------------------------------------------

@dataclass(frozen=True)
class ExprStmt:
    expr: Expr
    span: Span | None = _span()


@dataclass(frozen=True)
class Assign:
    target: Expr
    value: Expr
    declare: bool = False
    span: Span | None = _span()


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple["Stmt", ...]
    orelse: tuple["Stmt", ...] | None = None
    span: Span | None = _span()


@dataclass(frozen=True)
class Return:
    value: Expr | None = None
    span: Span | None = _span()


@dataclass(frozen=True)
class Comment:
    text: str
    span: Span | None = _span()


Stmt = Union[ExprStmt, Assign, If, Return, Comment]


def stmt_exprs(stmt: Stmt) -> list[Expr]:
    """Expressions owned directly by ``stmt`` (not by nested blocks)."""
    if isinstance(stmt, ExprStmt):
        return [stmt.expr]
    if isinstance(stmt, Assign):
        return [stmt.target, stmt.value]
    if isinstance(stmt, If):
        return [stmt.cond]
    if isinstance(stmt, Return):
        return [] if stmt.value is None else [stmt.value]
    return []


# -- declarations -----------------------------------------------------------

class InputKind(enum.Enum):
    DEVICE = "device-capability"
    CONTACT = "contact"
    PHONE = "phone"
    NUMBER = "number"
    ENUM = "enum"
    TEXT = "text"
    MODE = "mode"


_INPUT_KINDS = {
    "contact": InputKind.CONTACT,
    "phone": InputKind.PHONE,
    "number": InputKind.NUMBER,
    "decimal": InputKind.NUMBER,
    "enum": InputKind.ENUM,
    "bool": InputKind.ENUM,
    "mode": InputKind.MODE,
}


@dataclass(frozen=True)
class InputDecl:
    name: str
    input_type: str
    options: tuple[Arg, ...] = ()
    parens: bool = False
    children: tuple["SectionItem", ...] | None = None
    span: Span | None = _span()

    @property
    def kind(self) -> InputKind:
        if self.input_type.startswith(("capability.", "device.")):
            return InputKind.DEVICE
        return _INPUT_KINDS.get(self.input_type, InputKind.TEXT)

    @property
    def is_device(self) -> bool:
        return self.kind is InputKind.DEVICE

    def _opt(self, key: str):
        for a in self.options:
            if a.name == key and isinstance(a.value, Literal):
                return a.value.value
        return None

    @property
    def title(self) -> str | None:
        return self._opt("title")

    @property
    def required(self) -> bool:
        value = self._opt("required")
        return True if value is None else bool(value)

    @property
    def default(self):
        return self._opt("defaultValue")

    @property
    def multiple(self) -> bool:
        return bool(self._opt("multiple"))


SectionItem = Union[InputDecl, Stmt]


@dataclass(frozen=True)
class Section:
    args: tuple[Arg, ...]
    body: tuple[SectionItem, ...]
    span: Span | None = _span()

    @property
    def title(self) -> str | None:
        for a in self.args:
            if isinstance(a.value, Literal) and isinstance(a.value.value, str):
                if a.name in (None, "title"):
                    return a.value.value
        return None


@dataclass(frozen=True)
class Preferences:
    items: tuple[Union[Section, Comment], ...]
    span: Span | None = _span()


@dataclass(frozen=True)
class Definition:
    args: tuple[Arg, ...]
    span: Span | None = _span()

    def get(self, key: str):
        for a in self.args:
            if a.name == key and isinstance(a.value, Literal):
                return a.value.value
        return None


@dataclass(frozen=True)
class MethodDecl:
    name: str
    params: tuple[str, ...]
    body: tuple[Stmt, ...]
    span: Span | None = _span()


TopItem = Union[Definition, Preferences, MethodDecl, Comment]

LIFECYCLE = ("installed", "updated", "initialize")


@dataclass(frozen=True)
class SmartAppAst:
    items: tuple[TopItem, ...]
    origin: str = field(default="<input>", compare=False)
    span: Span | None = _span()

    @property
    def definition(self) -> Definition | None:
        return next((i for i in self.items if isinstance(i, Definition)), None)

    @property
    def name(self) -> str:
        d = self.definition
        value = d.get("name") if d else None
        return str(value) if value else self.origin

    @property
    def sections(self) -> list[Section]:
        out = []
        for item in self.items:
            if isinstance(item, Preferences):
                out.extend(s for s in item.items if isinstance(s, Section))
        return out

    @property
    def preferences(self) -> list[Section]:
        return self.sections

    @property
    def inputs(self) -> list[InputDecl]:
        out: list[InputDecl] = []

        def visit(items) -> None:
            for it in items:
                if isinstance(it, InputDecl):
                    out.append(it)
                    if it.children:
                        visit(it.children)

        for s in self.sections:
            visit(s.body)
        return out

    def input(self, name: str) -> InputDecl | None:
        return next((i for i in self.inputs if i.name == name), None)

    @property
    def methods(self) -> list[MethodDecl]:
        return [i for i in self.items if isinstance(i, MethodDecl)]

    def method(self, name: str) -> MethodDecl | None:
        return next((m for m in self.methods if m.name == name), None)

    @property
    def lifecycle(self) -> dict[str, MethodDecl | None]:
        return {name: self.method(name) for name in LIFECYCLE}


def walk_stmts(body) -> Iterator[Stmt]:
    for stmt in body:
        yield stmt
        if isinstance(stmt, If):
            yield from walk_stmts(stmt.then)
            if stmt.orelse:
                yield from walk_stmts(stmt.orelse)
