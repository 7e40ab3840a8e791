"""Minimal s-expression reader and writer.

Atoms are bare tokens (no string quoting); lists are parenthesised.
"""

from __future__ import annotations

import re

from .errors import InputError

_TOKEN = re.compile(r"\s*(\(|\)|[^\s()]+)")


def tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise InputError(f"cannot tokenize near {text[pos:pos + 20]!r}")
        tokens.append(m.group(1))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return tokens


def parse(text: str):
    """Parse one s-expression into nested lists of string atoms."""
    tokens = tokenize(text)
    if not tokens:
        raise InputError("empty s-expression")
    value, pos = _read(tokens, 0)
    if pos != len(tokens):
        raise InputError(f"trailing tokens after s-expression: {tokens[pos:]}")
    return value


def _read(tokens, pos):
    tok = tokens[pos]
    if tok == "(":
        items = []
        pos += 1
        while True:
            if pos >= len(tokens):
                raise InputError("unbalanced parentheses")
            if tokens[pos] == ")":
                return items, pos + 1
            item, pos = _read(tokens, pos)
            items.append(item)
    if tok == ")":
        raise InputError("unexpected ')'")
    return tok, pos + 1


def dump(tree) -> str:
    if isinstance(tree, list):
        return "(" + " ".join(dump(t) for t in tree) + ")"
    return str(tree)
