"""JSON extraction from model output, canonical serialization and the repair re-prompt."""

from __future__ import annotations

import json
from typing import Any, Callable, TypeVar

from .errors import SchemaError
from .prompts import render_repair

T = TypeVar("T")

_decoder = json.JSONDecoder()


def extract_json(raw: str) -> Any:
    """Decode the first JSON value in ``raw``; tolerates prose and ``` fences around it."""
    if raw is None:
        raise SchemaError("empty response", "$", raw)
    text = raw.strip()
    if not text:
        raise SchemaError("empty response", "$", raw)
    try:
        return json.loads(text)
    except ValueError:
        pass
    for i, ch in enumerate(text):
        if ch in "[{":
            try:
                value, _ = _decoder.raw_decode(text, i)
                return value
            except ValueError:
                continue
    raise SchemaError("response contains no JSON value", "$", raw)


def dumps(obj: Any) -> str:
    """Stable single-line JSON used for every persisted record."""
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def number(x: float) -> int | float:
    return int(x) if float(x).is_integer() else x


def call_with_repair(complete: Callable[[str], str], prompt: str, parse: Callable[[str], T]) -> tuple[T, str, bool]:
    """One repair re-prompt on a contract violation, then hard failure.

    Returns (parsed, raw_response, repaired).
    """
    raw = complete(prompt)
    try:
        return parse(raw), raw, False
    except SchemaError as first:
        violation = f"{first.location}: {first.violation}"
    raw = complete(render_repair(prompt, violation))
    try:
        return parse(raw), raw, True
    except SchemaError as second:
        raise SchemaError(second.violation, second.location, raw) from None
