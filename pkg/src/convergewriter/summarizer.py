"""Two-level tree summarization: one leaf summary per document, one root per cluster."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .clustering import KnowledgeCluster
from .errors import MissingLeaf
from .gateway import ChatRequest, Gateway
from .parsing import strip_reasoning
from .sources import Document
from .text import sentences
from .tokens import chunk_tokens, truncate_tokens, truncate_with_marker

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LeafSummary:
    doc_id: str
    text: str
    token_count: int


@dataclass(frozen=True)
class ClusterSummary:
    cluster_id: int
    text: str
    source_leaf_ids: tuple[str, ...]
    token_count: int = 0


@dataclass(frozen=True)
class SummarySettings:
    leaf_budget: int = 300
    cluster_budget: int = 800
    input_tokens: int = 6000
    concurrency: int = 4


class TreeSummarizer:
    def __init__(self, gateway: Gateway, settings: SummarySettings | None = None, topic: str = ""):
        self.gateway = gateway
        self.settings = settings or SummarySettings()
        self.topic = topic

    def _ask(self, template_id: str, **bindings) -> str:
        return strip_reasoning(self.gateway.complete(ChatRequest.make(template_id, **bindings))).strip()

    def _enforce(self, text: str, budget: int, what: str) -> str:
        clipped, cut = truncate_with_marker(text, budget, self.gateway.count_tokens)
        if cut:
            logger.warning("%s exceeded %d tokens; truncated", what, budget)
        return clipped

    def summarize_document(self, doc: Document) -> LeafSummary:
        if not doc.text.strip():
            raise ValueError(f"document {doc.doc_id} has no text")
        cfg = self.settings
        chunks = chunk_tokens(doc.text, cfg.input_tokens, self.gateway.count_tokens)
        if len(chunks) == 1:
            text = self._ask("summarize", title=doc.title, text=doc.text, budget=cfg.leaf_budget)
        else:
            partial = [
                self._ask("summarize", title=f"{doc.title} (part {i}/{len(chunks)})", text=chunk,
                          budget=cfg.leaf_budget)
                for i, chunk in enumerate(chunks, 1)
            ]
            joined = truncate_tokens("\n\n".join(partial), cfg.input_tokens, self.gateway.count_tokens)
            text = self._ask("summarize", title=doc.title, text=joined, budget=cfg.leaf_budget)
        if not text:
            logger.warning("empty summary for %s; falling back to leading sentences", doc.doc_id)
            text = " ".join(sentences(doc.text)[:3]) or doc.text
        text = self._enforce(text, cfg.leaf_budget, f"leaf summary of {doc.doc_id}")
        return LeafSummary(doc.doc_id, text, self.gateway.count_tokens(text))

    def _reduce(self, leaves: Sequence[LeafSummary]) -> str:
        block = "\n\n".join(f"[{leaf.doc_id}] {leaf.text}" for leaf in leaves)
        return self._ask("cluster_summarize", topic=self.topic, summaries=block,
                         budget=self.settings.cluster_budget)

    def summarize_cluster(
        self, cluster: KnowledgeCluster, leaves: Mapping[str, LeafSummary] | Sequence[LeafSummary]
    ) -> ClusterSummary:
        if not isinstance(leaves, Mapping):
            leaves = {leaf.doc_id: leaf for leaf in leaves}
        ordered = []
        for doc_id in sorted(cluster.doc_ids):
            if doc_id not in leaves:
                raise MissingLeaf(doc_id)
            ordered.append(leaves[doc_id])
        cap = self.settings.input_tokens
        if sum(leaf.token_count for leaf in ordered) <= cap:
            text = self._reduce(ordered)
        else:
            batches: list[list[LeafSummary]] = [[]]
            used = 0
            for leaf in ordered:
                if batches[-1] and used + leaf.token_count > cap:
                    batches.append([])
                    used = 0
                batches[-1].append(leaf)
                used += leaf.token_count
            logger.info("cluster %d: %d leaves reduced in %d batches", cluster.cluster_id, len(ordered), len(batches))
            partial = [self._reduce(batch) for batch in batches]
            block = "\n\n".join(f"[part {i}] {p}" for i, p in enumerate(partial, 1))
            block = truncate_tokens(block, cap, self.gateway.count_tokens)
            text = self._ask("cluster_summarize", topic=self.topic, summaries=block,
                             budget=self.settings.cluster_budget)
        if not text:
            logger.warning("empty summary for cluster %d; joining leaf openings", cluster.cluster_id)
            text = " ".join((sentences(leaf.text) or [leaf.text])[0] for leaf in ordered)
        text = self._enforce(text, self.settings.cluster_budget, f"cluster {cluster.cluster_id} summary")
        return ClusterSummary(
            cluster.cluster_id, text, tuple(cluster.doc_ids), self.gateway.count_tokens(text)
        )

    def summarize_all(
        self, documents: Sequence[Document], clusters: Sequence[KnowledgeCluster]
    ) -> "SummaryTree":
        workers = max(1, self.settings.concurrency)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            leaves = list(pool.map(self.summarize_document, documents))
            by_id = {leaf.doc_id: leaf for leaf in leaves}
            roots = list(pool.map(lambda c: self.summarize_cluster(c, by_id), clusters))
        return SummaryTree(leaves, roots)


@dataclass
class SummaryTree:
    leaves: list[LeafSummary]
    clusters: list[ClusterSummary]

    def leaf_map(self) -> dict[str, LeafSummary]:
        return {leaf.doc_id: leaf for leaf in self.leaves}

    def cluster_map(self) -> dict[int, ClusterSummary]:
        return {c.cluster_id: c for c in self.clusters}

    def save(self, run_dir: str | os.PathLike) -> Path:
        path = Path(run_dir) / "clusters" / "summaries.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "leaves": [asdict(leaf) for leaf in self.leaves],
            "clusters": [{**asdict(c), "source_leaf_ids": list(c.source_leaf_ids)} for c in self.clusters],
        }
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False), encoding="utf-8")
        return path

    @classmethod
    def load(cls, run_dir: str | os.PathLike) -> "SummaryTree":
        data = json.loads((Path(run_dir) / "clusters" / "summaries.json").read_text(encoding="utf-8"))
        return cls(
            [LeafSummary(**leaf) for leaf in data["leaves"]],
            [ClusterSummary(c["cluster_id"], c["text"], tuple(c["source_leaf_ids"]), c["token_count"])
             for c in data["clusters"]],
        )
