"""Indentation-aware tokenizer for DRLP segments."""
from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import DrlpSyntaxError

KEYWORDS = {"for", "in", "with", "range", "orange"}

# longest operators first
_OPERATORS = ["<=", ">=", "==", "!=", "~=", "<", ">", "+", "-", "*", "/",
              "(", ")", "[", "]", ",", ":", "="]
_UNICODE = {"≤": "<=", "≥": ">=", "≈": "~=", "≠": "!=", "−": "-"}

_NUMBER = re.compile(r"(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?")
_NAME = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


@dataclass(frozen=True)
class Token:
    kind: str  # NAME, NUMBER, OP, NEWLINE, INDENT, DEDENT, EOF
    value: str
    line: int
    column: int


def tokenize(lines, first_line=1):
    """Tokenize ``lines`` (a list of source lines without newlines).

    ``first_line`` is the 1-based line number of ``lines[0]`` so errors point
    into the original file.
    """
    tokens = []
    indents = [0]
    depth = 0
    for offset, raw in enumerate(lines):
        lineno = first_line + offset
        text = raw.rstrip("\n").rstrip("\r")
        stripped = text.strip()
        if depth == 0 and (not stripped or stripped.startswith("#")):
            continue
        col = 0
        if depth == 0:
            width = len(text) - len(text.lstrip(" \t"))
            indent = len(text[:width].expandtabs(4))
            if indent > indents[-1]:
                indents.append(indent)
                tokens.append(Token("INDENT", "", lineno, 1))
            else:
                while indent < indents[-1]:
                    indents.pop()
                    tokens.append(Token("DEDENT", "", lineno, 1))
                if indent != indents[-1]:
                    raise DrlpSyntaxError(lineno, 1, "consistent indentation")
            col = width
        while col < len(text):
            ch = text[col]
            if ch in " \t":
                col += 1
                continue
            if ch == "#":
                break
            if ch in _UNICODE:
                tokens.append(Token("OP", _UNICODE[ch], lineno, col + 1))
                col += 1
                continue
            m = _NUMBER.match(text, col)
            if m and (ch.isdigit() or ch == "."):
                tokens.append(Token("NUMBER", m.group(0), lineno, col + 1))
                col = m.end()
                continue
            m = _NAME.match(text, col)
            if m:
                tokens.append(Token("NAME", m.group(0), lineno, col + 1))
                col = m.end()
                continue
            for op in _OPERATORS:
                if text.startswith(op, col):
                    if op in "([":
                        depth += 1
                    elif op in ")]":
                        depth = max(0, depth - 1)
                    tokens.append(Token("OP", op, lineno, col + 1))
                    col += len(op)
                    break
            else:
                raise DrlpSyntaxError(lineno, col + 1, "a DRLP token", ch)
        if depth == 0:
            tokens.append(Token("NEWLINE", "", lineno, len(text) + 1))
    last = first_line + max(len(lines) - 1, 0)
    if depth:
        raise DrlpSyntaxError(last, 1, "closing bracket")
    while len(indents) > 1:
        indents.pop()
        tokens.append(Token("DEDENT", "", last, 1))
    tokens.append(Token("EOF", "", last, 1))
    return tokens
