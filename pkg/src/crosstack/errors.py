# src/crosstack/errors.py
from __future__ import annotations

"""Exception types raised by CrossStack.

Every failure the simulator reports on purpose derives from
:class:`CrossStackError`, so callers (and the command-line front end) can tell
a modelled refusal apart from a programming bug. Configuration text errors
carry line/column information and a small source-style context snippet.
"""

from dataclasses import dataclass
from typing import Any, Iterable


class CrossStackError(Exception):
    """Base class for every error raised on purpose by the simulator."""


class InvalidArgumentError(CrossStackError, ValueError):
    """An operation received an argument outside its documented domain."""


class ReadDisturbError(CrossStackError):
    """A read would drive a device at or beyond its switching threshold."""

    def __init__(self, v_max: float, v_th: float) -> None:
        self.v_max = v_max
        self.v_th = v_th
        super().__init__(
            f"read voltage {v_max:g} V exceeds the switching threshold "
            f"{v_th:g} V; refusing to disturb stored weights "
            "(set allow_read_disturb to override)"
        )


class ModeViolationError(CrossStackError):
    """A read-enable assignment breaks the biasing rule of its mode.

    Attributes:
        mode: Name of the operating mode whose rule was violated.
        re: The offending per-layer read-enable levels.
        rule: Human readable statement of the rule.
    """

    def __init__(self, mode: str, re: Iterable[bool], rule: str) -> None:
        self.mode = mode
        self.re = tuple(bool(level) for level in re)
        self.rule = rule
        pair = ", ".join("1" if level else "0" for level in self.re)
        super().__init__(f"{mode} mode violation for RE=({pair}): {rule}")


@dataclass(slots=True, init=False)
class SolverError(CrossStackError):
    """The nodal system could not be solved.

    Attributes:
        node: Name of the node that made the system singular, if known.
        reason: Short description of the failure.
    """

    node: str | None
    reason: str

    def __init__(self, reason: str, node: str | None = None) -> None:
        self.reason = reason
        self.node = node
        Exception.__init__(self)

    def __str__(self) -> str:
        if self.node is None:
            return f"SolverError: {self.reason}"
        return f"SolverError: {self.reason} (node {self.node!r})"


class ConfigError(CrossStackError):
    """Configuration rejected: unknown key or violated invariant."""


@dataclass(slots=True, init=False)
class ConfigSyntaxError(ConfigError):
    """Malformed configuration text with source position information.

    Attributes:
        text: Configuration text that was being parsed.
        index: Zero-based character index where parsing stopped.
        expected: Human readable description of what was expected.
        line: One-based line number of the error location.
        column: One-based column number of the error location.
    """

    text: str
    index: int
    expected: str
    line: int
    column: int

    def __init__(self, text: str, index: int, expected: str) -> None:
        self.text = text
        self.index = index
        self.expected = expected
        self.line, self.column = get_line_column(text, index)
        Exception.__init__(self)

    def __str__(self) -> str:
        context_line = _get_context_line(self.text, self.line)
        marker_line = " " * (self.column - 1) + "^"
        return (
            f"config syntax error at line {self.line}, column {self.column}: "
            f"expected {self.expected}\n"
            f"{context_line}\n"
            f"{marker_line}"
        )

    @classmethod
    def from_parsy_error(cls, exc: Exception, text: str) -> "ConfigSyntaxError":
        """Build from a parsy ``ParseError`` (duck-typed ``index``/``expected``)."""
        index = getattr(exc, "index", 0)
        expected_raw: Any = getattr(exc, "expected", str(exc))

        if isinstance(expected_raw, (set, frozenset)):
            expected = " or ".join(sorted(map(str, expected_raw)))
        else:
            expected = str(expected_raw)

        return cls(text=text, index=index, expected=expected)


def get_line_column(text: str, index: int) -> tuple[int, int]:
    """Translate a character index into one-based ``(line, column)``.

    The index is clamped into ``[0, len(text)]``.
    """
    index = min(max(index, 0), len(text))
    line = text.count("\n", 0, index) + 1
    last_newline = text.rfind("\n", 0, index)
    column = index + 1 if last_newline == -1 else index - last_newline
    return line, max(column, 1)


def _get_context_line(text: str, line: int) -> str:
    lines = text.splitlines()
    if 1 <= line <= len(lines):
        return lines[line - 1]
    return ""
