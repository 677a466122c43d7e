"""Section-wise article generation anchored to knowledge clusters.

Each body section is written from the documents of its own cluster only,
reranked against the section heading and subpoints.  Sections cite evidence
with local numeric markers ``[n]``; the final pass polishes each section,
checks the markers survived, and renumbers them globally in reading order.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .clustering import KnowledgeCluster
from .errors import ContextOverflow, ParseFailure, ProviderError
from .gateway import ChatRequest, Gateway
from .outline import Outline, OutlineSection
from .parsing import strip_reasoning
from .sources import Document
from .summarizer import LeafSummary
from .text import sentences
from .tokens import truncate_tokens

logger = logging.getLogger(__name__)

MARKER = re.compile(r"\[(\d+)\]")
_MARKER_LIST = re.compile(r"\[(\d+(?:\s*[,;]\s*\d+)+)\]")
_LEADING_HEADING = re.compile(r"\A\s*#{1,6}[^\n]*\n+")


@dataclass
class SectionDraft:
    section_index: int
    title: str
    kind: str
    text: str
    cluster_id: int | None = None
    evidence_ids: list[str] = field(default_factory=list)
    citation_map: dict[int, str] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def markers(self) -> list[int]:
        return [int(m) for m in MARKER.findall(self.text)]

    def to_dict(self) -> dict:
        return {
            "section_index": self.section_index,
            "title": self.title,
            "kind": self.kind,
            "text": self.text,
            "cluster_id": self.cluster_id,
            "evidence_ids": self.evidence_ids,
            "citation_map": {str(k): v for k, v in self.citation_map.items()},
            "flags": self.flags,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SectionDraft":
        return cls(
            d["section_index"], d["title"], d["kind"], d["text"], d.get("cluster_id"),
            list(d.get("evidence_ids", [])), {int(k): v for k, v in d.get("citation_map", {}).items()},
            list(d.get("flags", [])),
        )


@dataclass(frozen=True)
class BibEntry:
    marker: int
    doc_id: str
    title: str
    url: str | None = None


@dataclass
class FinalArticle:
    topic: str
    markdown: str
    section_drafts: list[SectionDraft]
    bibliography: list[BibEntry]

    def citations_json(self) -> str:
        payload = {
            "bibliography": [b.__dict__ for b in self.bibliography],
            "sections": [
                {
                    "index": d.section_index,
                    "title": d.title,
                    "kind": d.kind,
                    "cluster_id": d.cluster_id,
                    "evidence_ids": d.evidence_ids,
                    "citations": {str(k): v for k, v in d.citation_map.items()},
                    "flags": d.flags,
                }
                for d in self.section_drafts
            ],
        }
        return json.dumps(payload, indent=2, ensure_ascii=False)


def normalize_markers(text: str) -> str:
    """Rewrite grouped markers such as ``[1, 3]`` as ``[1][3]``."""
    return _MARKER_LIST.sub(
        lambda m: "".join(f"[{n.strip()}]" for n in re.split(r"[,;]", m.group(1))), text
    )


def strip_markers(text: str) -> str:
    text = MARKER.sub("", normalize_markers(text))
    return re.sub(r"[ \t]+([.,;:!?])", r"\1", re.sub(r"[ \t]{2,}", " ", text)).strip()


def slugify(title: str, limit: int = 40) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", title.lower()).strip("-")
    return slug[:limit].strip("-") or "section"


def render_markdown(topic: str, drafts: Sequence[SectionDraft], bibliography: Sequence[BibEntry] = ()) -> str:
    parts = [f"# {topic}", ""]
    for d in drafts:
        parts += [f"## {d.title}", "", d.text.strip(), ""]
    if bibliography:
        parts += ["## References", ""]
        for b in bibliography:
            parts.append(f"[{b.marker}] {b.title}" + (f". {b.url}" if b.url else ""))
        parts.append("")
    return "\n".join(parts)


@dataclass(frozen=True)
class WriterSettings:
    top_m: int = 6
    excerpt_tokens: int = 800
    digest_tokens: int = 150
    polish_context_tokens: int = 200
    concurrency: int = 4


class ArticleWriter:
    def __init__(
        self,
        gateway: Gateway,
        documents: Mapping[str, Document],
        leaves: Mapping[str, LeafSummary],
        topic: str,
        settings: WriterSettings | None = None,
    ):
        self.gateway = gateway
        self.documents = documents
        self.leaves = leaves
        self.topic = topic
        self.settings = settings or WriterSettings()

    def _clip(self, text: str, budget: int) -> str:
        return truncate_tokens(text, budget, self.gateway.count_tokens)

    # -- evidence -----------------------------------------------------------

    def select_section_evidence(self, section: OutlineSection, cluster: KnowledgeCluster) -> list[Document]:
        if section.kind != "body":
            raise ValueError("evidence is selected for body sections only")
        if section.cluster_id != cluster.cluster_id:
            raise ValueError(f"section maps to cluster {section.cluster_id}, got {cluster.cluster_id}")
        candidates = [self.documents[d] for d in cluster.doc_ids]
        query = "\n".join([section.title, *section.subpoints])
        return self.gateway.rerank(query, candidates, self.settings.top_m)

    def evidence_block(self, evidence: Sequence[Document]) -> str:
        blocks = []
        for i, doc in enumerate(evidence, 1):
            leaf = self.leaves.get(doc.doc_id)
            summary = " ".join((leaf.text if leaf else "").split())
            excerpt = self._clip(doc.text, self.settings.excerpt_tokens).strip()
            blocks.append(f"[{i}] {doc.title}\nSummary: {summary}\nExcerpt: {excerpt}")
        return "\n\n".join(blocks)

    # -- generation ---------------------------------------------------------

    def _extractive(self, evidence: Sequence[Document]) -> str:
        lines = []
        for i, doc in enumerate(evidence, 1):
            leaf = self.leaves.get(doc.doc_id)
            sent = sentences(leaf.text if leaf else "") or sentences(doc.text) or [doc.title]
            lines.append(f"{sent[0]} [{i}]")
        return " ".join(lines)

    def generate_section(self, section: OutlineSection, evidence: Sequence[Document]) -> SectionDraft:
        if not evidence:
            raise ValueError(f"section {section.title!r} has no evidence")
        request = ChatRequest.make(
            "section_gen",
            topic=self.topic,
            title=section.title,
            subpoints="\n".join(f"- {p}" for p in section.subpoints) or "- (none given)",
            evidence=self.evidence_block(evidence),
        )

        def nonblank(out: str) -> str:
            out = _LEADING_HEADING.sub("", strip_reasoning(out)).strip()
            if not out:
                raise ParseFailure("blank section")
            return out

        flags = []
        try:
            text = self.gateway.complete_parsed(request, nonblank)
        except ParseFailure:
            logger.warning("section %r came back blank twice; using extractive fallback", section.title)
            text = self._extractive(evidence)
            flags.append("extractive_fallback")
        text = normalize_markers(text)
        m = len(evidence)

        def keep(match: re.Match) -> str:
            n = int(match.group(1))
            if 1 <= n <= m:
                return match.group(0)
            logger.warning("section %r: dropping out-of-range citation [%d]", section.title, n)
            return ""

        cleaned = MARKER.sub(keep, text)
        if cleaned != text:
            flags.append("stripped_markers")
            text = re.sub(r"[ \t]{2,}", " ", cleaned)
        ids = [d.doc_id for d in evidence]
        used = sorted({int(n) for n in MARKER.findall(text)})
        return SectionDraft(
            section.index, section.title, "body", text.strip(), section.cluster_id,
            ids, {n: ids[n - 1] for n in used}, flags,
        )

    def write_body(self, outline: Outline, clusters: Sequence[KnowledgeCluster]) -> list[SectionDraft]:
        by_id = {c.cluster_id: c for c in clusters}

        def one(section: OutlineSection) -> SectionDraft:
            evidence = self.select_section_evidence(section, by_id[section.cluster_id])
            return self.generate_section(section, evidence)

        with ThreadPoolExecutor(max_workers=max(1, self.settings.concurrency)) as pool:
            return list(pool.map(one, outline.body))

    # -- framing ------------------------------------------------------------

    def digest(self, draft: SectionDraft) -> str:
        first = strip_markers(draft.text.split("\n\n")[0])
        return self._clip(" ".join(first.split()), self.settings.digest_tokens)

    def digest_block(self, body: Sequence[SectionDraft]) -> str:
        return "\n\n".join(f"[SECTION {i}] {d.title}\n{self.digest(d)}" for i, d in enumerate(body, 1))

    def frame_article(
        self, outline: Outline, body: Sequence[SectionDraft]
    ) -> tuple[SectionDraft, SectionDraft]:
        if not body:
            raise ValueError("framing needs at least one body section")
        digests = self.digest_block(body)
        intro_sec, concl_sec = outline.sections[0], outline.sections[-1]
        out = []
        for template, sec in (("intro_gen", intro_sec), ("conclusion_gen", concl_sec)):
            text = strip_markers(strip_reasoning(
                self.gateway.complete(ChatRequest.make(template, topic=self.topic, digests=digests))
            ))
            text = _LEADING_HEADING.sub("", text).strip()
            flags = []
            if not text:
                text = f"This article covers {self.topic}: " + "; ".join(d.title for d in body) + "."
                flags.append("template_fallback")
            out.append(SectionDraft(sec.index, sec.title, sec.kind, text, flags=flags))
        return out[0], out[1]

    # -- polish + finalize --------------------------------------------------

    def polish_section(self, draft: SectionDraft, previous: str) -> SectionDraft:
        request = ChatRequest.make(
            "refine", topic=self.topic, title=draft.title, text=draft.text,
            previous=previous or "(this is the first section)",
        )
        polished = SectionDraft(**{**draft.__dict__, "flags": list(draft.flags)})
        try:
            text = strip_reasoning(self.gateway.complete(request)).strip()
        except (ProviderError, ContextOverflow) as exc:
            logger.warning("polish failed for %r (%s); keeping draft", draft.title, exc)
            polished.flags.append("polish_failed")
            return polished
        text = _LEADING_HEADING.sub("", text).strip()
        before = Counter(MARKER.findall(draft.text))
        if not text or Counter(MARKER.findall(text)) != before:
            logger.warning("polish changed citation markers in %r; keeping draft", draft.title)
            polished.flags.append("polish_reverted")
            return polished
        polished.text = text
        return polished

    def polish_and_finalize(self, drafts: Sequence[SectionDraft]) -> FinalArticle:
        polished = []
        previous = ""
        for d in drafts:
            p = self.polish_section(d, previous)
            polished.append(p)
            previous = self._tail(p.text)
        return finalize(self.topic, polished, self.documents)

    def _tail(self, text: str) -> str:
        budget = self.settings.polish_context_tokens
        count = self.gateway.count_tokens
        if count(text) <= budget:
            return text
        lo = len(text) - len(truncate_tokens(text[::-1], budget, count))
        return text[lo:]


def finalize(topic: str, drafts: Sequence[SectionDraft], documents: Mapping[str, Document]) -> FinalArticle:
    """Renumber per-section markers globally in reading order and build the bibliography."""
    global_ids: dict[str, int] = {}
    final = []
    for d in drafts:
        new_map: dict[int, str] = {}

        def renumber(match: re.Match) -> str:
            doc_id = d.citation_map.get(int(match.group(1)))
            if doc_id is None:
                return ""
            n = global_ids.setdefault(doc_id, len(global_ids) + 1)
            new_map[n] = doc_id
            return f"[{n}]"

        text = MARKER.sub(renumber, d.text)
        final.append(SectionDraft(
            d.section_index, d.title, d.kind, text, d.cluster_id, list(d.evidence_ids), new_map, list(d.flags)
        ))
    bibliography = []
    for doc_id, n in global_ids.items():
        doc = documents.get(doc_id)
        bibliography.append(BibEntry(n, doc_id, doc.title if doc else doc_id, doc.url if doc else None))
    return FinalArticle(topic, render_markdown(topic, final, bibliography), final, bibliography)
