"""Tolerant parsers for structured model answers.

Each parser raises ``ParseFailure`` when nothing usable can be extracted; the
gateway turns that into a single re-ask.
"""

from __future__ import annotations

import re

from .errors import ParseFailure

MAX_KEYWORD_WORDS = 6
MAX_KEYWORD_CHARS = 80

_LABEL = re.compile(r"^\s*(?:\*\*)?keywords?(?:\*\*)?\s*[:：]\s*(.*)$", re.I)
_BULLET = re.compile(r"^\s*(?:[-*•]+|\(?\d+[.)]|[a-z][.)])\s+")
_THINK = re.compile(r"<think>.*?</think>", re.S | re.I)


def strip_reasoning(text: str) -> str:
    """Drop ``<think>`` blocks some reasoning models emit before the answer."""
    return _THINK.sub("", text)


def _clean_keyword(item: str) -> str:
    item = _BULLET.sub("", item.strip())
    item = item.strip().strip("\"'`*").strip()
    return item.rstrip(".").strip()


def dedup_casefold(items) -> list[str]:
    seen = set()
    out = []
    for item in items:
        key = item.casefold()
        if key not in seen:
            seen.add(key)
            out.append(item)
    return out


def parse_keywords(text: str) -> list[str]:
    """Keywords from a ``KEYWORDS:`` line, a numbered/bulleted list or a delimited run.

    Items are split on commas, semicolons and newlines.  Items longer than a
    few words are taken to be prose and discarded.
    """
    text = strip_reasoning(text)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    labelled = [m.group(1) for ln in lines if (m := _LABEL.match(ln))]
    if labelled:
        candidates = labelled
    else:
        bulleted = [ln for ln in lines if _BULLET.match(ln)]
        # an unlabelled line that reads as a sentence is prose, not a list
        candidates = bulleted or [
            ln for ln in lines
            if not (ln.rstrip().endswith((".", "!", "?", ":")) and len(ln.split()) > MAX_KEYWORD_WORDS)
        ]
    items = []
    for chunk in candidates:
        for piece in re.split(r"[,;\n]", chunk):
            kw = _clean_keyword(piece)
            if not kw or kw.casefold() == "none":
                continue
            if len(kw.split()) > MAX_KEYWORD_WORDS or len(kw) > MAX_KEYWORD_CHARS:
                continue
            items.append(kw)
    items = dedup_casefold(items)
    if not items:
        raise ParseFailure(f"no keywords found in {text[:120]!r}")
    return items


def parse_verdict(text: str, positive: str, negative: str) -> bool:
    """True for ``positive``, False for ``negative``; anything else is a failure.

    The negative label is checked first so that e.g. IRRELEVANT is never read as
    RELEVANT; "NOT <positive>" also counts as negative.
    """
    body = strip_reasoning(text).upper()
    if re.search(rf"\b{negative}\b", body) or re.search(rf"\bNOT\s+{positive}\b", body):
        return False
    if re.search(rf"\b{positive}\b", body):
        return True
    raise ParseFailure(f"no {positive}/{negative} verdict in {text[:80]!r}")


_SCORE = re.compile(r"score\s*[:=]?\s*(-?\d+(?:\.\d+)?)", re.I)
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")


def parse_score(text: str) -> float:
    body = strip_reasoning(text)
    m = _SCORE.search(body) or _NUMBER.search(body)
    if not m:
        raise ParseFailure(f"no score in {text[:80]!r}")
    return float(m.group(1) if m.re is _SCORE else m.group(0))
