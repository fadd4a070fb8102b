"""Lenient extraction of JSON payloads from model output."""

from __future__ import annotations

import json
import re
from typing import Any, Iterator

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\s*(.*?)\s*```", re.DOTALL)
_TRAILING_COMMA_RE = re.compile(r",\s*([}\]])")


def strip_fences(text: str) -> str:
    """Return the content of the first code fence, or the text unchanged."""
    m = _FENCE_RE.search(text)
    return m.group(1) if m else text


def remove_trailing_commas(text: str) -> str:
    return _TRAILING_COMMA_RE.sub(r"\1", text)


def iter_json_values(text: str) -> Iterator[Any]:
    """Yield every top-level JSON object or array embedded in text."""
    decoder = json.JSONDecoder()
    starts = sorted(
        i for ch in "{[" for i in range(len(text)) if text[i] == ch
    )
    pos = 0
    for idx in starts:
        if idx < pos:
            continue
        try:
            value, end = decoder.raw_decode(text, idx)
        except json.JSONDecodeError:
            continue
        pos = end
        yield value


def extract_json_candidates(raw: str) -> list[Any]:
    """All JSON values findable after fence stripping and comma repair."""
    candidates: list[Any] = []
    for variant in (raw, strip_fences(raw)):
        for repaired in (variant, remove_trailing_commas(variant)):
            for value in iter_json_values(repaired):
                if value not in candidates:
                    candidates.append(value)
    return candidates
