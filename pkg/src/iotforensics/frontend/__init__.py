"""Lexer, parser and emitter for the SmartThings-style app DSL."""
from .ast import *  # noqa: F401,F403
from .ast import SmartAppAst, InputDecl, InputKind
from .emitter import emit, emit_expr
from .errors import FrontendError, LexError, ParseError, Span
from .lexer import SourceUnit, Token, TokenKind, tokenize
from .parser import parse, parse_source
from .classify import CallKind, classify_call

__all__ = [
    "SmartAppAst", "InputDecl", "InputKind", "emit", "emit_expr", "FrontendError",
    "LexError", "ParseError", "Span", "SourceUnit", "Token", "TokenKind", "tokenize",
    "parse", "parse_source", "CallKind", "classify_call",
]
