# src/crosstack/parsers.py
from __future__ import annotations

"""Parsy grammar for the sectioned ``key = value`` configuration format.

The format is deliberately small::

    # comment
    [device]
    r_set = 10e3        ; trailing comments are fine
    polarity = 1
    [transient]
    input_codes = 0, 1, 0, 1

Values are typed while parsing: integers, floats (scientific notation
included), ``true``/``false``, bare words, double-quoted strings, or comma
separated lists of those. A quoted string is always a string, so
``output_dir = "2024"`` stays text and ``"my results"`` keeps its space.
Higher level code never imports parsy directly; it calls
:func:`parse_document` or :func:`parse_override`.
"""

import re
from typing import Any, Union

from parsy import Parser, ParseError as ParsyParseError, eof, regex, seq, string

from .errors import ConfigError, ConfigSyntaxError

Scalar = Union[bool, int, float, str]
Value = Union[Scalar, list[Scalar]]
Document = dict[str, dict[str, Value]]

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"


def integer() -> Parser[int]:
    r"""Signed base-10 integer that is not the prefix of a float or a word."""
    return regex(r"[-+]?\d+(?![.eE\w])").map(int)


def float_num() -> Parser[float]:
    """Floating point number: ``10``, ``3.14``, ``.5``, ``10.``, ``-2.5E-4``."""
    return regex(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?(?![\w.])").map(float)


def boolean() -> Parser[bool]:
    """``true`` or ``false`` (lower case only)."""
    return regex(r"(?:true|false)(?![^\s,#;])").map(lambda text: text == "true")


def word() -> Parser[str]:
    """Bare word: anything up to whitespace, a comma, a comment or a bracket."""
    return regex(r"[^\s,#;=\[\]]+")


_ESCAPES = {"n": "\n"}


def _unescape(text: str) -> str:
    return re.sub(r"\\(.)", lambda match: _ESCAPES.get(match.group(1), match.group(1)), text)


def quoted() -> Parser[str]:
    r"""Double-quoted string; ``\"``, ``\\`` and ``\n`` are the only escapes."""
    return regex(r'"((?:[^"\\\n]|\\.)*)"', group=1).map(_unescape)


def scalar() -> Parser[Scalar]:
    """One typed value; booleans and numbers take precedence over words."""
    return (quoted() | boolean() | integer() | float_num() | word()).desc("a value")


def value() -> Parser[Value]:
    """A scalar, or a comma separated list of scalars."""
    comma = regex(r"[ \t]*,[ \t]*")

    def collapse(items: list[Scalar]) -> Value:
        return items[0] if len(items) == 1 else items

    return scalar().sep_by(comma, min=1).map(collapse)


_blanks = regex(r"[ \t]*")
_line_end = regex(r"[ \t]*(?:[#;][^\n]*)?\n").desc("end of line")


def section_header() -> Parser[tuple[str, Any]]:
    """``[name]`` on its own line."""
    name = regex(_NAME).desc("section name")
    header = _blanks >> string("[") >> _blanks >> name << _blanks << string("]")
    return (header << _line_end).map(lambda section: ("section", section))


def entry() -> Parser[tuple[str, Any]]:
    """``key = value`` on its own line."""
    key = regex(_NAME).desc("key")
    assign = _blanks >> key << _blanks << string("=") << _blanks
    return (seq(assign, value()) << _line_end).map(lambda pair: ("entry", tuple(pair)))


def document() -> Parser[list[tuple[str, Any]]]:
    """Whole configuration file as a list of tagged lines."""
    blank = _line_end.result(("blank", None))
    return (blank | section_header() | entry()).many() << eof


def parse_document(text: str) -> Document:
    """Parse configuration *text* into ``{section: {key: value}}``.

    Raises:
        ConfigSyntaxError: The text does not follow the grammar.
        ConfigError: An entry precedes every section header, or a key is
            repeated within a section.
    """
    source = text if not text or text.endswith("\n") else text + "\n"
    try:
        lines = document().parse(source)
    except ParsyParseError as exc:
        raise ConfigSyntaxError.from_parsy_error(exc, source) from exc

    sections: Document = {}
    current: str | None = None
    for tag, payload in lines:
        if tag == "section":
            current = payload
            sections.setdefault(current, {})
        elif tag == "entry":
            key, raw = payload
            if current is None:
                raise ConfigError(f"entry {key!r} appears before any [section] header")
            if key in sections[current]:
                raise ConfigError(f"duplicate key {current}.{key}")
            sections[current][key] = raw
    return sections


def parse_override(text: str) -> tuple[str, str, Value]:
    """Parse a ``section.key=value`` command-line override."""
    qualified = regex(_NAME + r"\." + _NAME).desc("section.key")
    assign = _blanks >> qualified << _blanks << string("=") << _blanks
    override = seq(assign, value()) << _blanks << eof
    try:
        name, raw = override.parse(text)
    except ParsyParseError as exc:
        raise ConfigSyntaxError.from_parsy_error(exc, text) from exc
    section, key = name.split(".", 1)
    return section, key, raw


def render_value(raw: Any) -> str:
    """Render a value so that :func:`value` parses it back unchanged."""
    if isinstance(raw, bool):
        return "true" if raw else "false"
    if isinstance(raw, float):
        return repr(raw)
    if isinstance(raw, (list, tuple)):
        return ", ".join(render_value(item) for item in raw)
    if isinstance(raw, str):
        return raw if _reads_back(raw) else _quote(raw)
    return str(raw)


def _reads_back(text: str) -> bool:
    try:
        parsed = scalar().parse(text)
    except ParsyParseError:
        return False
    return isinstance(parsed, str) and parsed == text


def _quote(text: str) -> str:
    escaped = text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    return f'"{escaped}"'
