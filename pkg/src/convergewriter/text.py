"""Small text helpers shared by fallbacks and the offline provider."""

from __future__ import annotations

import re

WORD = re.compile(r"[A-Za-z][A-Za-z'-]+")
_SENT = re.compile(r"(?<=[.!?])\s+")
STOPWORDS = frozenset(
    """a an and are as at be been but by can for from has have in into is it its of on or
    that the their there these this those to was were which while with within also such than
    other more most many some about after before between during over under very""".split()
)


def sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENT.split(text.strip()) if s.strip()]


def content_words(text: str) -> list[str]:
    return [w for w in WORD.findall(text.lower()) if w not in STOPWORDS and len(w) >= 4]
