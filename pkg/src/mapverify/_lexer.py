"""Tokenizer shared by the rule language and the predicate-definition language."""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal

IDENT = "IDENT"
NUMBER = "NUMBER"
EOF = "EOF"

# Longest operators first so "<=>" wins over "<=" and "<".
OPERATORS = ("<=>", ":=", "=>", "||", "&&", "<=", ">=", "==", "!=", "<", ">", "!",
             "(", ")", ",", ".", ":", ";")

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>\#[^\n]*)"
    r"|(?P<number>-?\d+(?:\.\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>" + "|".join(re.escape(op) for op in OPERATORS) + ")"
)


class ParseError(Exception):
    """Positioned syntax error; ``expected`` is the set of acceptable tokens."""

    def __init__(self, message: str, line: int, column: int, expected: frozenset[str] = frozenset()):
        self.msg = message
        self.line = line
        self.column = column
        self.expected = expected
        shown = sorted(e if e in (IDENT, NUMBER, EOF) else repr(e) for e in expected)
        detail = f" (expected one of: {', '.join(shown)})" if expected else ""
        super().__init__(f"{line}:{column}: {message}{detail}")


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, NUMBER, EOF, or the operator text itself
    text: str
    line: int
    column: int

    def describe(self) -> str:
        return "end of input" if self.kind == EOF else repr(self.text)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        col = pos - line_start + 1
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "number":
            tokens.append(Token(NUMBER, m.group(), line, col))
        elif kind == "ident":
            tokens.append(Token(IDENT, m.group(), line, col))
        elif kind == "op":
            tokens.append(Token(m.group(), m.group(), line, col))
        pos = m.end()
    tokens.append(Token(EOF, "", line, pos - line_start + 1))
    return tokens


class TokenStream:
    """Cursor over a token list with expectation tracking for error messages."""

    def __init__(self, text: str, max_depth: int = 128):
        self.tokens = tokenize(text)
        self.pos = 0
        self.depth = 0
        self.max_depth = max_depth

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at(self, kind: str, text: str | None = None) -> bool:
        tok = self.current
        return tok.kind == kind and (text is None or tok.text == text)

    def at_keyword(self, word: str) -> bool:
        return self.at(IDENT, word)

    def advance(self) -> Token:
        tok = self.current
        if tok.kind != EOF:
            self.pos += 1
        return tok

    def error(self, message: str, expected: set[str] | frozenset[str] = frozenset()) -> ParseError:
        tok = self.current
        return ParseError(f"{message}, found {tok.describe()}", tok.line, tok.column, frozenset(expected))

    def expect(self, kind: str, what: str | None = None) -> Token:
        if self.current.kind != kind:
            label = what or (kind if kind in (IDENT, NUMBER) else repr(kind))
            raise self.error(f"expected {label}", {kind})
        return self.advance()

    def expect_keyword(self, word: str) -> Token:
        if not self.at_keyword(word):
            raise self.error(f"expected {word!r}", {word})
        return self.advance()

    def enter(self) -> None:
        self.depth += 1
        if self.depth > self.max_depth:
            tok = self.current
            raise ParseError(f"nesting deeper than {self.max_depth} levels", tok.line, tok.column)

    def leave(self) -> None:
        self.depth -= 1


def format_number(value: float) -> str:
    """Shortest round-trip decimal without exponent notation."""
    text = format(Decimal(repr(float(value))), "f")
    if "." not in text:
        text += ".0"
    return text
