"""Deterministic text accounting shared across the framework."""

from __future__ import annotations

import json
import math
from typing import Any


def token_count(text: str) -> int:
    """Token proxy: one token per 4 UTF-8 bytes, rounded up."""
    return math.ceil(len(text.encode("utf-8")) / 4)


def terms(text: str) -> set[str]:
    """Case-folded whitespace-split vocabulary of a text."""
    return {word.casefold() for word in text.split()}


def overlap_score(query: str, content: str) -> float:
    """Lexical relevance: shared distinct terms over sqrt of content vocabulary size."""
    content_terms = terms(content)
    if not content_terms:
        return 0.0
    return len(terms(query) & content_terms) / math.sqrt(len(content_terms))


def canonical_answer(text: str) -> str:
    """Normalise an answer for agreement checks: trim, then case-fold."""
    return text.strip().casefold()


def canonical_json(value: Any) -> str:
    """Stable single-line JSON: sorted keys, compact separators, raw UTF-8."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
