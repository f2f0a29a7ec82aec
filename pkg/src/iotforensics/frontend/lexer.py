"""Tokenizer for the smart-app DSL.

Interpolated strings are split into segments so the embedded expressions
are lexed as ordinary tokens::

    "temp ${evt.value} F"  ->  SEG('"temp ${')  IDENT  PUNCT  IDENT  SEG('} F"')

Whitespace is skipped; every other character of the input belongs to
exactly one token, comments included.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import LexError, Span


class TokenKind(enum.Enum):
    IDENT = "identifier"
    KEYWORD = "keyword"
    STRING = "string-literal"
    SEGMENT = "interpolated-string-segment"
    NUMBER = "number"
    PUNCT = "punctuation"
    COMMENT = "comment"


KEYWORDS = frozenset({
    "definition", "preferences", "section", "input", "def", "if", "else",
    "return", "true", "false", "null",
})

# longest first
PUNCTUATORS = (
    "==", "!=", "<=", ">=", "&&", "||",
    "(", ")", "{", "}", "[", "]", ",", ":", ".", "=", "<", ">",
    "+", "-", "*", "/", "%", "!", ";",
)

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "'": "'", "\\": "\\", "$": "$"}


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    lexeme: str
    span: Span
    line: int
    col: int

    def is_punct(self, *values: str) -> bool:
        return self.kind is TokenKind.PUNCT and self.lexeme in values

    def is_keyword(self, *values: str) -> bool:
        return self.kind is TokenKind.KEYWORD and self.lexeme in values

    def __repr__(self) -> str:
        return f"Token({self.kind.name}, {self.lexeme!r}, {self.span.start}:{self.span.end})"


@dataclass(frozen=True)
class SourceUnit:
    text: str
    origin: str = "<input>"

    def __post_init__(self) -> None:
        if not self.origin:
            raise ValueError("origin must be non-empty")


def decode_string_body(raw: str) -> str:
    """Resolve backslash escapes in the body of a string literal."""
    out = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch == "\\" and i + 1 < len(raw):
            nxt = raw[i + 1]
            out.append(_ESCAPES.get(nxt, "\\" + nxt))
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


class _Lexer:
    def __init__(self, src: SourceUnit) -> None:
        self.src = src
        self.text = src.text
        self.pos = 0
        self.tokens: list[Token] = []
        self.line_starts = [0]
        for i, ch in enumerate(self.text):
            if ch == "\n":
                self.line_starts.append(i + 1)
        # one entry per open `${`: brace depth inside that interpolation
        self.interp_depth: list[int] = []

    def _linecol(self, offset: int) -> tuple[int, int]:
        lo, hi = 0, len(self.line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.line_starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1, offset - self.line_starts[lo] + 1

    def _emit(self, kind: TokenKind, start: int, end: int) -> None:
        line, col = self._linecol(start)
        self.tokens.append(Token(kind, self.text[start:end], Span(start, end), line, col))

    def _error(self, message: str, start: int, end: int) -> LexError:
        line, col = self._linecol(start)
        return LexError(message, Span(start, end), self.src.origin, line, col)

    def run(self) -> list[Token]:
        text = self.text
        n = len(text)
        while self.pos < n:
            ch = text[self.pos]
            if ch in " \t\r\n\f":
                self.pos += 1
                continue
            start = self.pos
            if text.startswith("//", start):
                end = text.find("\n", start)
                end = n if end < 0 else end
                self._emit(TokenKind.COMMENT, start, end)
                self.pos = end
            elif text.startswith("/*", start):
                end = text.find("*/", start + 2)
                if end < 0:
                    raise self._error("unterminated block comment", start, n)
                self._emit(TokenKind.COMMENT, start, end + 2)
                self.pos = end + 2
            elif ch == '"':
                self._string_part(start, opening=True)
            elif ch == "'":
                self._single_quoted(start)
            elif ch.isdigit():
                self._number(start)
            elif ch.isalpha() or ch == "_" or ch == "$":
                end = start + 1
                while end < n and (text[end].isalnum() or text[end] in "_$"):
                    end += 1
                word = text[start:end]
                kind = TokenKind.KEYWORD if word in KEYWORDS else TokenKind.IDENT
                self._emit(kind, start, end)
                self.pos = end
            elif ch == "}" and self.interp_depth and self.interp_depth[-1] == 0:
                self.interp_depth.pop()
                self._string_part(start, opening=False)
            else:
                for p in PUNCTUATORS:
                    if text.startswith(p, start):
                        if self.interp_depth:
                            if p == "{":
                                self.interp_depth[-1] += 1
                            elif p == "}":
                                self.interp_depth[-1] -= 1
                        self._emit(TokenKind.PUNCT, start, start + len(p))
                        self.pos = start + len(p)
                        break
                else:
                    raise self._error(f"illegal character {ch!r}", start, start + 1)
        if self.interp_depth:
            raise self._error("unterminated string interpolation", len(text), len(text))
        return self.tokens

    def _string_part(self, start: int, opening: bool) -> None:
        """Scan from an opening quote or a closing `}` up to `${` or the closing quote."""
        text = self.text
        i = start + 1
        n = len(text)
        while i < n:
            ch = text[i]
            if ch == "\\":
                i += 2
                continue
            if ch == "\n":
                break
            if ch == '"':
                kind = TokenKind.STRING if opening else TokenKind.SEGMENT
                self._emit(kind, start, i + 1)
                self.pos = i + 1
                return
            if ch == "$" and i + 1 < n and text[i + 1] == "{":
                self._emit(TokenKind.SEGMENT, start, i + 2)
                self.interp_depth.append(0)
                self.pos = i + 2
                return
            i += 1
        raise self._error("unterminated string literal", start, min(i, n))

    def _single_quoted(self, start: int) -> None:
        text = self.text
        i = start + 1
        while i < len(text):
            ch = text[i]
            if ch == "\\":
                i += 2
                continue
            if ch == "\n":
                break
            if ch == "'":
                self._emit(TokenKind.STRING, start, i + 1)
                self.pos = i + 1
                return
            i += 1
        raise self._error("unterminated string literal", start, min(i, len(text)))

    def _number(self, start: int) -> None:
        text = self.text
        end = start
        while end < len(text) and text[end].isdigit():
            end += 1
        if end + 1 < len(text) and text[end] == "." and text[end + 1].isdigit():
            end += 1
            while end < len(text) and text[end].isdigit():
                end += 1
        self._emit(TokenKind.NUMBER, start, end)
        self.pos = end


def tokenize(src: SourceUnit | str) -> list[Token]:
    if isinstance(src, str):
        src = SourceUnit(src)
    return _Lexer(src).run()
