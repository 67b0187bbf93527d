"""Tokenizer for ``.i2d`` sources."""

from __future__ import annotations

import re
from dataclasses import dataclass


@dataclass(frozen=True)
class Location:
    path: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.path}:{self.line}:{self.column}"


class ParseError(Exception):
    """A located syntax or reference error."""

    def __init__(self, message: str, location: Location | None = None,
                 expected: tuple = ()):
        self.message = message
        self.location = location
        self.expected = tuple(expected)
        text = message
        if expected:
            text += " (expected " + ", ".join(expected) + ")"
        if location is not None:
            text = f"{location}: {text}"
        super().__init__(text)


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    location: Location


KEYWORDS = {
    "entity", "item", "flow", "rule", "erule", "require", "use", "class",
    "in", "not-in", "on",
}

# unicode aliases from the mathematical notation
_ALIASES = {
    "⊢": "|-",
    "∈": "in",
    "∉": "not-in",
    "¬": "!",
    "→": "->",
    "⇒": "=>",
    "∖": "\\",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>(?:\#|//)[^\n]*)
  | (?P<string>"[^"\n]*")
  | (?P<number>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)
  | (?P<notin>not-in\b|notin\b)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\|-|->|=>|[{}\[\]();,:@*!\\])
  | (?P<uni>[⊢∈∉¬→⇒∖])
    """,
    re.VERBOSE,
)


def tokenize(text: str, path: str = "<input>") -> list:
    tokens = []
    line = 1
    line_start = 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        loc = Location(path, line, pos - line_start + 1)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", loc)
        kind = m.lastgroup
        value = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("ws", "comment"):
            pass
        elif kind == "string":
            tokens.append(Token("string", value[1:-1], loc))
        elif kind == "number":
            tokens.append(Token("number", value, loc))
        elif kind == "notin":
            tokens.append(Token("kw", "not-in", loc))
        elif kind == "ident":
            tokens.append(Token("kw" if value in KEYWORDS else "ident", value, loc))
        elif kind == "uni":
            alias = _ALIASES[value]
            tokens.append(Token("kw" if alias in KEYWORDS else "op", alias, loc))
        else:
            tokens.append(Token("op", value, loc))
        pos = m.end()
    tokens.append(Token("eof", "", Location(path, line, pos - line_start + 1)))
    return tokens
