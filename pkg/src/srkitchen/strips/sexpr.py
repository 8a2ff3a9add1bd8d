"""Positioned s-expression reader."""

from __future__ import annotations

from dataclasses import dataclass


class StripsSyntaxError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        where = f"line {line}, column {col}: " if line else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class Atom:
    text: str
    line: int
    col: int
    quoted: bool = False

    def __str__(self):
        return self.text


@dataclass(frozen=True)
class SList:
    items: tuple
    line: int
    col: int

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, k):
        return self.items[k]


_DELIMS = set("()\";")


def tokenize(text: str):
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line, col = line + 1, 1
            i += 1
            continue
        if ch in " \t\r\f":
            i += 1
            col += 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in "()":
            yield ch, line, col, False
            i += 1
            col += 1
            continue
        if ch == '"':
            start_line, start_col = line, col
            j = i + 1
            buf = []
            while j < n and text[j] != '"':
                if text[j] == "\n":
                    raise StripsSyntaxError("unterminated string", start_line, start_col)
                buf.append(text[j])
                j += 1
            if j >= n:
                raise StripsSyntaxError("unterminated string", start_line, start_col)
            yield "".join(buf), start_line, start_col, True
            col += j + 1 - i
            i = j + 1
            continue
        j = i
        while j < n and not text[j].isspace() and text[j] not in _DELIMS:
            j += 1
        word = text[i:j]
        for c in word:
            if not (c.isalnum() or c in "-_?:.=+*/<>!"):
                raise StripsSyntaxError(f"unexpected character {c!r}", line, col + word.index(c))
        yield word.lower(), line, col, False
        col += j - i
        i = j


def read(text: str) -> list:
    """Read every top-level expression in ``text``."""
    stack: list[tuple[list, int, int]] = []
    top: list = []
    for tok, line, col, quoted in tokenize(text):
        if tok == "(" and not quoted:
            stack.append(([], line, col))
        elif tok == ")" and not quoted:
            if not stack:
                raise StripsSyntaxError("unbalanced ')'", line, col)
            items, l0, c0 = stack.pop()
            node = SList(tuple(items), l0, c0)
            (stack[-1][0] if stack else top).append(node)
        else:
            node = Atom(tok, line, col, quoted)
            (stack[-1][0] if stack else top).append(node)
    if stack:
        _, line, col = stack[-1]
        raise StripsSyntaxError("unbalanced '(' never closed", line, col)
    return top
