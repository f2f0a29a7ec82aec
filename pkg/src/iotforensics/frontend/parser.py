"""Recursive-descent parser for the smart-app DSL subset.

Supported top level: ``definition(...)``, ``preferences { section(...) { input ... } }``
and ``def name(params) { ... }`` methods. Statements cover calls (with or
without parentheses), assignment, ``def`` locals, ``if``/``else`` and ``return``.
"""
from __future__ import annotations

from .ast import (
    Arg, Assign, BinOp, Call, Comment, Compare, Definition, Expr, ExprStmt,
    GString, If, InputDecl, ListLit, Literal, Member, MethodDecl, Name,
    Preferences, Return, Section, SmartAppAst, Stmt, Unary, walk_expr,
    walk_stmts, stmt_exprs,
)
from .errors import ParseError, Span
from .lexer import SourceUnit, Token, TokenKind, decode_string_body, tokenize

_BINARY_PREC = {
    "||": 1,
    "&&": 2,
    "==": 3, "!=": 3, "<": 3, ">": 3, "<=": 3, ">=": 3,
    "+": 4, "-": 4,
    "*": 5, "/": 5, "%": 5,
}
COMPARISONS = frozenset({"==", "!=", "<", ">", "<=", ">="})

# objects a subscription may target besides declared inputs
SUBSCRIBABLE_GLOBALS = frozenset({"location", "app"})


class Parser:
    def __init__(self, tokens: list[Token], origin: str = "<input>") -> None:
        self.tokens = tokens
        self.pos = 0
        self.origin = origin
        self.prev: Token | None = None

    # -- token helpers ------------------------------------------------------

    def _next_index(self, i: int) -> int:
        while i < len(self.tokens) and self.tokens[i].kind is TokenKind.COMMENT:
            i += 1
        return i

    def peek_raw(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def peek(self, offset: int = 0) -> Token | None:
        i = self._next_index(self.pos)
        for _ in range(offset):
            i = self._next_index(i + 1)
        return self.tokens[i] if i < len(self.tokens) else None

    def advance(self) -> Token:
        i = self._next_index(self.pos)
        if i >= len(self.tokens):
            raise self.error("unexpected end of input", None, expected=None)
        tok = self.tokens[i]
        self.pos = i + 1
        self.prev = tok
        return tok

    def error(self, message: str, tok: Token | None, expected: str | None = None) -> ParseError:
        if tok is None:
            end = self.tokens[-1].span.end if self.tokens else 0
            line = self.tokens[-1].line if self.tokens else 1
            col = self.tokens[-1].col + len(self.tokens[-1].lexeme) if self.tokens else 1
            found = "end of input"
            span = Span(end, end)
        else:
            line, col, span = tok.line, tok.col, tok.span
            found = repr(tok.lexeme)
        if expected:
            message = f"{message}: expected {expected}, found {found}"
        return ParseError(message, span, self.origin, line, col)

    def expect_punct(self, value: str) -> Token:
        tok = self.peek()
        if tok is None or not tok.is_punct(value):
            raise self.error("syntax error", tok, expected=repr(value))
        return self.advance()

    def expect_kind(self, kind: TokenKind, what: str) -> Token:
        tok = self.peek()
        if tok is None or tok.kind is not kind:
            raise self.error("syntax error", tok, expected=what)
        return self.advance()

    def at_punct(self, *values: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.is_punct(*values)

    def _end_line(self, tok: Token) -> int:
        return tok.line + tok.lexeme.count("\n")

    def same_line(self, tok: Token | None) -> bool:
        return tok is not None and self.prev is not None and tok.line == self._end_line(self.prev)

    def _span_from(self, start: Token) -> Span:
        end = self.prev.span.end if self.prev is not None else start.span.end
        return Span(start.span.start, end)

    def _skip_semicolons(self) -> None:
        while self.at_punct(";"):
            self.advance()

    # -- program ------------------------------------------------------------

    def parse_program(self) -> SmartAppAst:
        items = []
        while True:
            raw = self.peek_raw()
            if raw is None:
                break
            if raw.kind is TokenKind.COMMENT:
                self.pos += 1
                items.append(Comment(raw.lexeme, raw.span))
                continue
            if raw.is_punct(";"):
                self.advance()
                continue
            if raw.is_keyword("definition"):
                items.append(self.parse_definition())
            elif raw.is_keyword("preferences"):
                items.append(self.parse_preferences())
            elif raw.is_keyword("def"):
                items.append(self.parse_method())
            else:
                raise self.error("syntax error", raw,
                                 expected="'definition', 'preferences' or 'def'")
        end = self.tokens[-1].span.end if self.tokens else 0
        app = SmartAppAst(tuple(items), self.origin, Span(0, end))
        self.check_invariants(app)
        return app

    def parse_definition(self) -> Definition:
        start = self.advance()
        self.expect_punct("(")
        args = self.parse_args(")")
        self.expect_punct(")")
        return Definition(tuple(args), self._span_from(start))

    def parse_preferences(self) -> Preferences:
        start = self.advance()
        self.expect_punct("{")
        items: list = []
        while True:
            raw = self.peek_raw()
            if raw is not None and raw.kind is TokenKind.COMMENT:
                self.pos += 1
                items.append(Comment(raw.lexeme, raw.span))
                continue
            tok = self.peek()
            if tok is None:
                raise self.error("unterminated preferences block", None, expected="'}'")
            if tok.is_punct("}"):
                self.advance()
                break
            if tok.is_keyword("section"):
                items.append(self.parse_section())
            else:
                raise self.error("syntax error", tok, expected="'section' or '}'")
        return Preferences(tuple(items), self._span_from(start))

    def parse_section(self) -> Section:
        start = self.advance()
        args: list[Arg] = []
        if self.at_punct("("):
            self.advance()
            args = self.parse_args(")")
            self.expect_punct(")")
        self.expect_punct("{")
        body = self.parse_section_body()
        return Section(tuple(args), tuple(body), self._span_from(start))

    def parse_section_body(self) -> list:
        items: list = []
        while True:
            raw = self.peek_raw()
            if raw is not None and raw.kind is TokenKind.COMMENT:
                self.pos += 1
                items.append(Comment(raw.lexeme, raw.span))
                continue
            tok = self.peek()
            if tok is None:
                raise self.error("unterminated block", None, expected="'}'")
            if tok.is_punct("}"):
                self.advance()
                return items
            if tok.is_punct(";"):
                self.advance()
                continue
            if tok.is_keyword("input"):
                items.append(self.parse_input())
            else:
                items.append(self.parse_statement())

    def parse_input(self) -> InputDecl:
        start = self.advance()
        parens = self.at_punct("(") and self.same_line(self.peek())
        if parens:
            self.advance()
            args = self.parse_args(")")
            self.expect_punct(")")
        else:
            args = self.parse_args(None)
        positional = [a for a in args if a.name is None]
        named = [a for a in args if a.name is not None]
        if len(positional) < 2 or not all(
                isinstance(a.value, Literal) and isinstance(a.value.value, str) for a in positional[:2]):
            raise self.error("input requires a name and a type string", start)
        if len(positional) > 2:
            raise self.error("too many positional arguments to input", start)
        children = None
        if self.at_punct("{") and self.same_line(self.peek()):
            self.advance()
            children = tuple(self.parse_section_body())
        return InputDecl(
            name=positional[0].value.value,
            input_type=positional[1].value.value,
            options=tuple(named),
            parens=parens,
            children=children,
            span=self._span_from(start),
        )

    def parse_method(self) -> MethodDecl:
        start = self.advance()
        name = self.expect_kind(TokenKind.IDENT, "method name").lexeme
        self.expect_punct("(")
        params: list[str] = []
        while not self.at_punct(")"):
            tok = self.expect_kind(TokenKind.IDENT, "parameter name")
            # optional type annotation: `Map evt`
            if self.peek() is not None and self.peek().kind is TokenKind.IDENT:
                tok = self.advance()
            params.append(tok.lexeme)
            if not self.at_punct(")"):
                self.expect_punct(",")
        self.expect_punct(")")
        body = self.parse_block()
        return MethodDecl(name, tuple(params), tuple(body), self._span_from(start))

    # -- statements ---------------------------------------------------------

    def parse_block(self) -> list[Stmt]:
        self.expect_punct("{")
        body: list[Stmt] = []
        while True:
            raw = self.peek_raw()
            if raw is not None and raw.kind is TokenKind.COMMENT:
                self.pos += 1
                body.append(Comment(raw.lexeme, raw.span))
                continue
            tok = self.peek()
            if tok is None:
                raise self.error("unterminated block", None, expected="'}'")
            if tok.is_punct("}"):
                self.advance()
                return body
            if tok.is_punct(";"):
                self.advance()
                continue
            body.append(self.parse_statement())

    def parse_statement(self) -> Stmt:
        tok = self.peek()
        if tok is None:
            raise self.error("syntax error", None, expected="statement")
        if tok.is_keyword("if"):
            return self.parse_if()
        if tok.is_keyword("return"):
            self.advance()
            nxt = self.peek()
            value = None
            if nxt is not None and self.same_line(nxt) and not nxt.is_punct("}", ";"):
                value = self.parse_expression()
            return Return(value, self._span_from(tok))
        if tok.is_keyword("def"):
            self.advance()
            name_tok = self.expect_kind(TokenKind.IDENT, "variable name")
            target = Name(name_tok.lexeme, name_tok.span)
            value: Expr = Literal(None)
            if self.at_punct("="):
                self.advance()
                value = self.parse_expression()
            return Assign(target, value, True, self._span_from(tok))

        expr = self.parse_expression()
        if self.at_punct("="):
            if not isinstance(expr, (Name, Member)):
                raise self.error("invalid assignment target", tok)
            self.advance()
            value = self.parse_expression()
            return Assign(expr, value, False, self._span_from(tok))
        nxt = self.peek()
        if isinstance(expr, (Name, Member)) and self.same_line(nxt) and self._starts_expression(nxt):
            args = self.parse_args(None)
            call = Call(expr, tuple(args), False, self._span_from(tok))
            return ExprStmt(call, call.span)
        if self.at_punct("{") and self.same_line(self.peek()):
            raise self.error("closures are not supported", self.peek())
        return ExprStmt(expr, self._span_from(tok))

    def _starts_expression(self, tok: Token | None) -> bool:
        if tok is None:
            return False
        if tok.kind in (TokenKind.STRING, TokenKind.SEGMENT, TokenKind.NUMBER, TokenKind.IDENT):
            return not tok.lexeme.startswith("}")
        if tok.kind is TokenKind.KEYWORD:
            return tok.lexeme in ("true", "false", "null")
        return tok.is_punct("[", "!")

    def parse_if(self) -> If:
        start = self.advance()
        self.expect_punct("(")
        cond = self.parse_expression()
        self.expect_punct(")")
        then = self.parse_block()
        orelse = None
        if self.peek() is not None and self.peek().is_keyword("else"):
            self.advance()
            if self.peek() is not None and self.peek().is_keyword("if"):
                orelse = (self.parse_if(),)
            else:
                orelse = tuple(self.parse_block())
        return If(cond, tuple(then), orelse, self._span_from(start))

    # -- expressions --------------------------------------------------------

    def parse_args(self, closer: str | None) -> list[Arg]:
        """Comma-separated args; stops at ``closer`` or, without one, at end of line."""
        args: list[Arg] = []
        if closer is not None and self.at_punct(closer):
            return args
        while True:
            tok = self.peek()
            if tok is None:
                raise self.error("syntax error", None, expected="argument")
            nxt = self.peek(1)
            if (tok.kind in (TokenKind.IDENT, TokenKind.KEYWORD, TokenKind.STRING)
                    and nxt is not None and nxt.is_punct(":")):
                self.advance()
                self.advance()
                key = decode_string_body(tok.lexeme[1:-1]) if tok.kind is TokenKind.STRING else tok.lexeme
                value = self.parse_expression()
                args.append(Arg(key, value, Span(tok.span.start, self.prev.span.end)))
            else:
                value = self.parse_expression()
                args.append(Arg(None, value, value.span))
            if self.at_punct(",") and (closer is not None or self.same_line(self.peek())):
                self.advance()
                continue
            return args

    def parse_expression(self, min_prec: int = 1) -> Expr:
        left = self.parse_unary()
        while True:
            tok = self.peek()
            if tok is None or tok.kind is not TokenKind.PUNCT:
                return left
            prec = _BINARY_PREC.get(tok.lexeme)
            if prec is None or prec < min_prec:
                return left
            self.advance()
            right = self.parse_expression(prec + 1)
            span = left.span.cover(right.span) if left.span else right.span
            if tok.lexeme in COMPARISONS:
                left = Compare(tok.lexeme, left, right, span)
            else:
                left = BinOp(tok.lexeme, left, right, span)

    def parse_unary(self) -> Expr:
        tok = self.peek()
        if tok is not None and tok.is_punct("!", "-"):
            self.advance()
            operand = self.parse_unary()
            return Unary(tok.lexeme, operand, Span(tok.span.start, operand.span.end))
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        start = self.peek()
        expr = self.parse_primary()
        while True:
            tok = self.peek()
            if tok is None:
                return expr
            if tok.is_punct("."):
                self.advance()
                name = self.advance()
                if name.kind not in (TokenKind.IDENT, TokenKind.KEYWORD):
                    raise self.error("syntax error", name, expected="member name")
                expr = Member(expr, name.lexeme, self._span_from(start))
            elif tok.is_punct("(") and self.same_line(tok):
                self.advance()
                args = self.parse_args(")")
                self.expect_punct(")")
                expr = Call(expr, tuple(args), True, self._span_from(start))
            else:
                return expr

    def parse_primary(self) -> Expr:
        tok = self.peek()
        if tok is None:
            raise self.error("syntax error", None, expected="expression")
        if tok.kind is TokenKind.NUMBER:
            self.advance()
            value = float(tok.lexeme) if "." in tok.lexeme else int(tok.lexeme)
            return Literal(value, tok.span)
        if tok.kind is TokenKind.STRING:
            self.advance()
            return Literal(decode_string_body(tok.lexeme[1:-1]), tok.span)
        if tok.kind is TokenKind.SEGMENT and tok.lexeme.startswith('"'):
            return self.parse_gstring()
        if tok.kind is TokenKind.KEYWORD and tok.lexeme in ("true", "false", "null"):
            self.advance()
            return Literal({"true": True, "false": False, "null": None}[tok.lexeme], tok.span)
        if tok.kind is TokenKind.IDENT:
            self.advance()
            return Name(tok.lexeme, tok.span)
        if tok.is_punct("("):
            self.advance()
            expr = self.parse_expression()
            self.expect_punct(")")
            return expr
        if tok.is_punct("["):
            self.advance()
            items = []
            while not self.at_punct("]"):
                items.append(self.parse_expression())
                if not self.at_punct("]"):
                    self.expect_punct(",")
            self.expect_punct("]")
            return ListLit(tuple(items), self._span_from(tok))
        raise self.error("syntax error", tok, expected="expression")

    def parse_gstring(self) -> GString:
        start = self.advance()
        parts: list = [decode_string_body(start.lexeme[1:-2])]
        while True:
            parts.append(self.parse_expression())
            seg = self.peek()
            if seg is None or seg.kind is not TokenKind.SEGMENT or not seg.lexeme.startswith("}"):
                raise self.error("syntax error", seg, expected="'}' closing interpolation")
            self.advance()
            if seg.lexeme.endswith("${") and not seg.lexeme.endswith('"'):
                parts.append(decode_string_body(seg.lexeme[1:-2]))
                continue
            parts.append(decode_string_body(seg.lexeme[1:-1]))
            return GString(tuple(parts), self._span_from(start))

    # -- semantic checks ----------------------------------------------------

    def _fail(self, message: str, span: Span | None) -> ParseError:
        line = col = 0
        if span is not None:
            for tok in self.tokens:
                if tok.span.start >= span.start:
                    line, col = tok.line, tok.col
                    break
        return ParseError(message, span, self.origin, line, col)

    def check_invariants(self, app: SmartAppAst) -> None:
        seen: set[str] = set()
        for m in app.methods:
            if m.name in seen:
                raise self._fail(f"duplicate method '{m.name}'", m.span)
            seen.add(m.name)
        names: set[str] = set()
        for inp in app.inputs:
            if inp.name in names:
                raise self._fail(f"duplicate input '{inp.name}'", inp.span)
            names.add(inp.name)
        for m in app.methods:
            for stmt in walk_stmts(m.body):
                for expr in stmt_exprs(stmt):
                    for node in walk_expr(expr):
                        if isinstance(node, Call) and node.callee == "subscribe":
                            target = node.positional[0] if node.positional else None
                            if not isinstance(target, Name) or (
                                    target.id not in names and target.id not in SUBSCRIBABLE_GLOBALS):
                                raise self._fail(
                                    "subscription target must be a declared input or 'location'",
                                    node.span)


def parse(tokens: list[Token], origin: str = "<input>") -> SmartAppAst:
    try:
        return Parser(tokens, origin).parse_program()
    except RecursionError:
        raise ParseError("input nested too deeply", None, origin, 0, 0) from None


def parse_source(src: SourceUnit | str) -> SmartAppAst:
    if isinstance(src, str):
        src = SourceUnit(src)
    return parse(tokenize(src), src.origin)
