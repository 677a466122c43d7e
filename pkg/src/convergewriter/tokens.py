"""Approximate token accounting.

The default counter charges one token per four UTF-8 bytes (rounded up).  Any
callable ``str -> int`` that is monotone under prefixing can replace it, e.g. a
wrapper around an exact tokenizer.
"""

from __future__ import annotations

import math
from typing import Callable

TokenCounter = Callable[[str], int]

ELLIPSIS = " [...]"


def approx_tokens(text: str) -> int:
    return math.ceil(len(text.encode("utf-8")) / 4)


def _longest_prefix(text: str, budget: int, counter: TokenCounter) -> int:
    """Largest ``n`` such that ``counter(text[:n]) <= budget``."""
    if counter(text) <= budget:
        return len(text)
    lo, hi = 0, len(text)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if counter(text[:mid]) <= budget:
            lo = mid
        else:
            hi = mid - 1
    return lo


def truncate_tokens(text: str, budget: int, counter: TokenCounter = approx_tokens) -> str:
    """Hard-cut ``text`` to at most ``budget`` tokens."""
    return text[: _longest_prefix(text, max(budget, 0), counter)]


def truncate_with_marker(
    text: str, budget: int, counter: TokenCounter = approx_tokens, marker: str = ELLIPSIS
) -> tuple[str, bool]:
    """Cut ``text`` so that ``text + marker`` fits ``budget``.

    Returns ``(text, truncated)``; text already within budget is returned as is.
    """
    if counter(text) <= budget:
        return text, False
    room = budget - counter(marker)
    head = truncate_tokens(text, room, counter).rstrip() if room > 0 else ""
    return head + marker, True


def chunk_tokens(text: str, max_tokens: int, counter: TokenCounter = approx_tokens) -> list[str]:
    """Split ``text`` greedily into consecutive pieces of at most ``max_tokens``."""
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    chunks = []
    rest = text
    while rest:
        n = _longest_prefix(rest, max_tokens, counter)
        if n == 0:
            # a single character above budget; emit it alone rather than loop
            n = 1
        chunks.append(rest[:n])
        rest = rest[n:]
    return chunks
