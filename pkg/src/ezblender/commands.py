"""Canonical command grammar for the mock execution backend.

Scripts are newline-separated commands:

    #ezcmd v1                      sentinel header (optional; emitted by generators)
    set <path> <value...>          assign a scalar, unit scalar, RGB triple, or 3-vector
    create <category> <name>       add a light or object with default attributes

Lines starting with ``#`` are comments; blank lines are ignored.  Directive
text must never contain the sentinel — that is how planner output is kept
free of executable code.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

SENTINEL = "#ezcmd"
SENTINEL_HEADER = "#ezcmd v1"

PATH_RE = re.compile(r"^[a-z_][a-z0-9_]*(\.[a-z_][a-z0-9_]*)+$")
SEGMENT_RE = re.compile(r"^[a-z_][a-z0-9_]*$")

CREATABLE_CATEGORIES = ("light", "object")


class CommandSyntaxError(ValueError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(message)


@dataclass(frozen=True)
class SetCommand:
    path: str
    values: tuple[float, ...]
    line: int


@dataclass(frozen=True)
class CreateCommand:
    category: str
    name: str
    line: int


Command = "SetCommand | CreateCommand"


def format_number(x: float) -> str:
    """Render a float the way the grammar reads it back (repr round-trip)."""
    if x == int(x) and abs(x) < 1e15:
        return repr(float(x)) if repr(float(x)).endswith(".0") else repr(x)
    return repr(x)


def format_set(path: str, value: "float | tuple[float, ...]") -> str:
    if isinstance(value, (int, float)):
        return f"set {path} {format_number(float(value))}"
    parts = " ".join(format_number(float(v)) for v in value)
    return f"set {path} {parts}"


def format_create(category: str, name: str) -> str:
    return f"create {category} {name}"


def parse_script(body: str) -> list["SetCommand | CreateCommand"]:
    """Parse a script body into commands.

    Raises CommandSyntaxError on the first malformed line.  The sentinel
    header and ``#`` comments are skipped.
    """
    commands: list[SetCommand | CreateCommand] = []
    for lineno, raw in enumerate(body.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0] == "set":
            if len(tokens) < 3:
                raise CommandSyntaxError("set requires a path and at least one value", lineno)
            path = tokens[1]
            if not PATH_RE.match(path):
                raise CommandSyntaxError(f"invalid path {path!r}", lineno)
            try:
                values = tuple(float(t) for t in tokens[2:])
            except ValueError:
                raise CommandSyntaxError(f"non-numeric value in {line!r}", lineno) from None
            commands.append(SetCommand(path=path, values=values, line=lineno))
        elif tokens[0] == "create":
            if len(tokens) != 3:
                raise CommandSyntaxError("create requires a category and a name", lineno)
            category, name = tokens[1], tokens[2]
            if category not in CREATABLE_CATEGORIES:
                raise CommandSyntaxError(f"unknown create category {category!r}", lineno)
            if not SEGMENT_RE.match(name):
                raise CommandSyntaxError(f"invalid name {name!r}", lineno)
            commands.append(CreateCommand(category=category, name=name, line=lineno))
        else:
            raise CommandSyntaxError(f"unknown command {tokens[0]!r}", lineno)
    return commands
