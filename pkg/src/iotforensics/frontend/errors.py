from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Span:
    start: int
    end: int

    def slice(self, text: str) -> str:
        return text[self.start:self.end]

    def cover(self, other: Span | None) -> Span:
        if other is None:
            return self
        return Span(min(self.start, other.start), max(self.end, other.end))


class FrontendError(Exception):
    """Base for lexer/parser failures; renders as ``origin:line:col: message``."""

    def __init__(self, message: str, span: Span | None = None, origin: str = "<input>",
                 line: int = 0, col: int = 0) -> None:
        self.message = message
        self.span = span
        self.origin = origin
        self.line = line
        self.col = col
        super().__init__(self.format())

    def format(self) -> str:
        return f"{self.origin}:{self.line}:{self.col}: {self.message}"


class LexError(FrontendError):
    pass


class ParseError(FrontendError):
    pass
