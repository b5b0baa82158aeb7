"""Hand-rolled lexer for the metric definition language."""

from __future__ import annotations

from dataclasses import dataclass

from ..diagnostics import DiagnosticError, error_at

KEYWORDS = frozenset(
    {
        "unit",
        "metric",
        "segment",
        "group",
        "in",
        "if",
        "then",
        "else",
        "and",
        "or",
        "not",
        "null",
        "true",
        "false",
    }
)

AGG_NAMES = frozenset({"Sum", "Avg", "Count", "Min", "Max", "Percentile"})

_TWO_CHAR = {"==", "!=", "<=", ">="}
_ONE_CHAR = set("+-*/<>(){},;=")


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "number", "string", "keyword", "agg", an operator lexeme, or "eof"
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i = 0
    n = len(source)

    def fail(msg: str, at_line: int, at_col: int) -> None:
        raise DiagnosticError([error_at(msg, at_line, at_col)])

    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == ".":
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k >= n or not source[k].isdigit():
                    fail("malformed number literal", start_line, start_col)
                j = k
                while j < n and source[j].isdigit():
                    j += 1
            text = source[i:j]
            tokens.append(Token("number", text, start_line, start_col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            if text in KEYWORDS:
                kind = "keyword"
            elif text in AGG_NAMES:
                kind = "agg"
            else:
                kind = "ident"
            tokens.append(Token(kind, text, start_line, start_col))
            col += j - i
            i = j
            continue
        if ch == '"':
            j = i + 1
            out = []
            while True:
                if j >= n or source[j] == "\n":
                    fail("unterminated string literal", start_line, start_col)
                c = source[j]
                if c == '"':
                    break
                if c == "\\":
                    if j + 1 >= n or source[j + 1] not in '\\"':
                        fail("unsupported escape in string literal", line, start_col + (j - i))
                    out.append(source[j + 1])
                    j += 2
                    continue
                out.append(c)
                j += 1
            tokens.append(Token("string", "".join(out), start_line, start_col))
            col += (j + 1) - i
            i = j + 1
            continue
        two = source[i : i + 2]
        if two in _TWO_CHAR:
            tokens.append(Token(two, two, start_line, start_col))
            i += 2
            col += 2
            continue
        if ch in _ONE_CHAR:
            tokens.append(Token(ch, ch, start_line, start_col))
            i += 1
            col += 1
            continue
        fail(f"unexpected character {ch!r}", start_line, start_col)

    tokens.append(Token("eof", "", line, col))
    return tokens
