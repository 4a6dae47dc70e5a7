"""Canonical value handling.

World values are stored as raw text. Matching two worlds' values, keying
mechanism tables, and comparing inference output against ground truth all
go through the same canonical form: trimmed, lowercased, with numeric
strings normalized so that "0" and "0.0" (or "1,200" and "1200") compare
equal.
"""

from __future__ import annotations

import re

_NUM_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")

_BOOL_WORDS = {"true": "true", "yes": "true", "false": "false", "no": "false"}


def parse_number(text: str) -> float | None:
    """Parse text as a number, tolerating thousands separators. None if not numeric."""
    cleaned = text.strip().replace(",", "")
    if _NUM_RE.match(cleaned):
        try:
            return float(cleaned)
        except ValueError:
            return None
    return None


def canonical_value(value: object) -> str:
    """Canonical string form used for cross-world value equality."""
    text = re.sub(r"\s+", " ", str(value).strip().lower())
    if text in _BOOL_WORDS:
        return _BOOL_WORDS[text]
    num = parse_number(text)
    if num is not None:
        if num == int(num) and abs(num) < 1e15:
            return str(int(num))
        return repr(num)
    return text


def values_match(a: object, b: object) -> bool:
    return canonical_value(a) == canonical_value(b)


def slugify(name: str) -> str:
    """Stable node identifier: lowercase, non-alphanumeric runs collapsed to '-'."""
    slug = re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")
    return slug
