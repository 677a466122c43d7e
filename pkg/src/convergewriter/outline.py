"""Outline generation from cluster summaries and the section-to-cluster constraint.

Outlines are Markdown: ``# <topic>`` followed by ``## `` main sections.  A body
section names its cluster with an HTML comment ``<!-- cluster: j -->`` on the
heading line or anywhere below it; bullets and deeper headings become
subpoints.  The first section must be the introduction and the last the
conclusion; neither carries a cluster.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Mapping, Sequence

from .gateway import ChatRequest, Gateway
from .parsing import strip_reasoning
from .text import sentences

logger = logging.getLogger(__name__)

Kind = Literal["introduction", "body", "conclusion"]

_HEADING = re.compile(r"^(#{1,6})\s+(.*?)\s*#*\s*$")
_TAG = re.compile(r"<!--\s*cluster\s*[:=]\s*(-?\d+)\s*-->", re.I)
_BULLET = re.compile(r"^\s*(?:[-*+]|\d+[.)])\s+(.*\S)\s*$")
_FENCE = re.compile(r"^\s*```[\w-]*\s*$")
_INTRO = re.compile(r"\bintroduction\b|^intro\b", re.I)
_CONCLUSION = re.compile(r"\bconclu(?:sion|sions|ding)\b", re.I)


@dataclass(frozen=True)
class OutlineSection:
    index: int
    title: str
    kind: Kind
    cluster_id: int | None = None
    subpoints: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind == "body" and self.cluster_id is None:
            raise ValueError(f"body section {self.title!r} needs a cluster id")
        if self.kind != "body" and self.cluster_id is not None:
            raise ValueError(f"{self.kind} section must not carry a cluster id")


@dataclass
class Outline:
    topic: str
    sections: list[OutlineSection]
    raw_markdown: str = ""
    retry_count: int = 0
    fallback: bool = False

    @property
    def body(self) -> list[OutlineSection]:
        return [s for s in self.sections if s.kind == "body"]

    def section_map(self) -> dict[int, int]:
        return {s.index: s.cluster_id for s in self.body}

    def to_markdown(self) -> str:
        lines = [f"# {self.topic}", ""]
        for s in self.sections:
            lines.append(f"## {s.title}")
            if s.cluster_id is not None:
                lines.append(f"<!-- cluster: {s.cluster_id} -->")
            lines.extend(f"- {p}" for p in s.subpoints)
            lines.append("")
        return "\n".join(lines)

    def save(self, run_dir: str | os.PathLike, mapping: str = "bijective") -> list[Path]:
        run_dir = Path(run_dir)
        md = run_dir / "outline.md"
        md.write_text(self.raw_markdown or self.to_markdown(), encoding="utf-8")
        meta = run_dir / "outline_map.json"
        meta.write_text(
            json.dumps(
                {
                    "topic": self.topic,
                    "map": {str(k): v for k, v in self.section_map().items()},
                    "retry_count": self.retry_count,
                    "fallback": self.fallback,
                    "mapping": mapping,
                },
                indent=2, ensure_ascii=False,
            ),
            encoding="utf-8",
        )
        return [md, meta]

    @classmethod
    def load(cls, run_dir: str | os.PathLike, k: int, mapping: str = "bijective") -> "Outline":
        run_dir = Path(run_dir)
        meta = json.loads((run_dir / "outline_map.json").read_text(encoding="utf-8"))
        outline = parse_and_validate((run_dir / "outline.md").read_text(encoding="utf-8"), k,
                                     meta["topic"], mapping)
        outline.retry_count = meta["retry_count"]
        outline.fallback = meta["fallback"]
        return outline


@dataclass(frozen=True)
class Violation:
    kind: Literal[
        "MissingIntro", "MissingConclusion", "UntaggedSection",
        "UnknownCluster", "DuplicateCluster", "UnusedCluster",
    ]
    value: str | int | None = None

    def __str__(self) -> str:
        return self.kind if self.value is None else f"{self.kind}({self.value})"


class ValidationFailure(ValueError):
    def __init__(self, violations: Sequence[Violation], raw: str = ""):
        self.violations = list(violations)
        self.raw = raw
        super().__init__("invalid outline: " + ", ".join(map(str, self.violations)))


@dataclass
class _Block:
    title: str
    tag: int | None = None
    subpoints: list[str] = field(default_factory=list)


def _split_blocks(raw: str) -> tuple[str | None, list[_Block]]:
    lines = [ln for ln in strip_reasoning(raw).splitlines() if not _FENCE.match(ln)]
    headings = [(i, len(m.group(1))) for i, ln in enumerate(lines) if (m := _HEADING.match(ln))]
    levels = {lvl for _, lvl in headings}
    section_level = 2 if 2 in levels else 1
    title = None
    blocks: list[_Block] = []
    for ln in lines:
        m = _HEADING.match(ln)
        if m:
            level, text = len(m.group(1)), m.group(2)
            tag = _TAG.search(text)
            text = _TAG.sub("", text).strip()
            if level < section_level:
                if title is None:
                    title = text
                continue
            if level == section_level:
                blocks.append(_Block(text, int(tag.group(1)) if tag else None))
                continue
            if blocks and text:
                blocks[-1].subpoints.append(text)
            continue
        if not blocks:
            continue
        tag = _TAG.search(ln)
        if tag and blocks[-1].tag is None:
            blocks[-1].tag = int(tag.group(1))
        bullet = _BULLET.match(_TAG.sub("", ln))
        if bullet:
            blocks[-1].subpoints.append(bullet.group(1))
    return title, blocks


def parse_and_validate(
    raw_markdown: str, k: int, topic: str | None = None, mapping: str = "bijective"
) -> Outline:
    """Parse an outline and check the section/cluster mapping.

    Raises ``ValidationFailure`` listing every violation found.  In
    ``injective`` mapping mode unused clusters are logged instead of rejected.
    """
    title, blocks = _split_blocks(raw_markdown)
    violations: list[Violation] = []
    n = len(blocks)
    has_intro = n > 0 and bool(_INTRO.search(blocks[0].title))
    has_conclusion = n > 1 and bool(_CONCLUSION.search(blocks[-1].title))
    if not has_intro:
        violations.append(Violation("MissingIntro"))
    if not has_conclusion:
        violations.append(Violation("MissingConclusion"))
    sections = []
    used: list[int] = []
    for i, block in enumerate(blocks):
        if i == 0 and has_intro:
            kind = "introduction"
        elif i == n - 1 and has_conclusion:
            kind = "conclusion"
        else:
            kind = "body"
        if kind == "body":
            if block.tag is None:
                violations.append(Violation("UntaggedSection", block.title))
                continue
            if not 0 <= block.tag < k:
                violations.append(Violation("UnknownCluster", block.tag))
                continue
            if block.tag in used:
                violations.append(Violation("DuplicateCluster", block.tag))
                continue
            used.append(block.tag)
            cluster_id = block.tag
        else:
            if block.tag is not None:
                logger.info("ignoring cluster tag on %s section %r", kind, block.title)
            cluster_id = None
        sections.append(OutlineSection(len(sections), block.title, kind, cluster_id, tuple(block.subpoints)))
    unused = [j for j in range(k) if j not in used]
    if unused:
        if mapping == "injective":
            logger.warning("outline leaves clusters %s unused", unused)
        else:
            violations.extend(Violation("UnusedCluster", j) for j in unused)
    if violations:
        raise ValidationFailure(violations, raw_markdown)
    return Outline(topic or title or "", sections, raw_markdown)


def cluster_block(summaries: Mapping[int, str]) -> str:
    return "\n\n".join(f"[CLUSTER {j}]\n{summaries[j].strip()}" for j in sorted(summaries))


def generate_outline(
    topic: str, cluster_summaries: Mapping[int, str], gateway: Gateway, feedback: str = ""
) -> str:
    if not cluster_summaries:
        raise ValueError("outline generation needs at least one cluster summary")
    request = ChatRequest.make(
        "outline_gen", topic=topic, clusters=cluster_block(cluster_summaries), feedback=feedback
    )
    return gateway.complete(request)


def _clean_title(text: str, words: int = 12) -> str:
    text = _TAG.sub("", text)
    text = re.sub(r"<!--|-->|[#\n\r`*]", " ", text)
    text = " ".join(text.split()[:words])
    return text.rstrip(".,;:!?").strip()


def fallback_outline(topic: str, cluster_summaries: Mapping[int, str]) -> Outline:
    """Introduction, one body section per cluster in id order, conclusion."""
    sections = [OutlineSection(0, "Introduction", "introduction")]
    for j in sorted(cluster_summaries):
        sent = sentences(cluster_summaries[j])
        title = _clean_title(sent[0]) if sent else ""
        subpoints = tuple(t for t in (_clean_title(s, 16) for s in sent[1:3]) if t)
        sections.append(OutlineSection(len(sections), title or f"Knowledge cluster {j}", "body", j, subpoints))
    sections.append(OutlineSection(len(sections), "Conclusion", "conclusion"))
    outline = Outline(topic, sections, fallback=True)
    outline.raw_markdown = outline.to_markdown()
    return outline


def _feedback(failure: ValidationFailure, attempt: int) -> str:
    listed = "\n".join(f"- {v}" for v in failure.violations)
    return (
        f"\nRevision {attempt}: your previous outline broke these rules:\n{listed}\n"
        "Write the full outline again and fix every listed problem."
    )


def repair_or_fallback(
    topic: str,
    raw: str,
    failure: ValidationFailure,
    cluster_summaries: Mapping[int, str],
    gateway: Gateway,
    max_retries: int = 2,
    mapping: str = "bijective",
) -> Outline:
    k = len(cluster_summaries)
    for attempt in range(1, max_retries + 1):
        logger.info("outline invalid (%s); retry %d/%d", failure, attempt, max_retries)
        raw = generate_outline(topic, cluster_summaries, gateway, _feedback(failure, attempt))
        try:
            outline = parse_and_validate(raw, k, topic, mapping)
        except ValidationFailure as exc:
            failure = exc
            continue
        outline.retry_count = attempt
        return outline
    logger.warning("outline still invalid after %d retries (%s); using fallback", max_retries, failure)
    outline = fallback_outline(topic, cluster_summaries)
    outline.retry_count = max_retries
    return outline


def build_outline(
    topic: str,
    cluster_summaries: Mapping[int, str],
    gateway: Gateway,
    max_retries: int = 2,
    mapping: str = "bijective",
) -> Outline:
    if sorted(cluster_summaries) != list(range(len(cluster_summaries))):
        raise ValueError("cluster ids must be 0..k-1")
    raw = generate_outline(topic, cluster_summaries, gateway)
    try:
        return parse_and_validate(raw, len(cluster_summaries), topic, mapping)
    except ValidationFailure as failure:
        return repair_or_fallback(topic, raw, failure, cluster_summaries, gateway, max_retries, mapping)
