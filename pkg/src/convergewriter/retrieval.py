"""Two-stage relevance-expanding retrieval.

Stage 1 asks the model for breadth keywords, searches the knowledge source
and keeps only documents the model judges relevant.  Stage 2 asks, per
relevant document, for depth keywords, searches again and filters with the
same judge.  The corpus is the union of both stages, Stage-1 copies winning.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

from .errors import EmptyCorpus, ParseFailure, ProviderError
from .gateway import ChatRequest, Gateway
from .parsing import dedup_casefold, parse_keywords, parse_verdict
from .sources import Document, SearchQuery, dedup_merge, read_jsonl, write_jsonl
from .tokens import truncate_tokens

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KeywordSet:
    keywords: tuple[str, ...]
    origin: Literal["initial", "expanded"] = "initial"
    parent_doc_id: str | None = None

    def __post_init__(self):
        if len({k.casefold() for k in self.keywords}) != len(self.keywords):
            raise ValueError("duplicate keywords")
        if (self.origin == "expanded") != (self.parent_doc_id is not None):
            raise ValueError("parent_doc_id is set iff origin is 'expanded'")

    def to_dict(self) -> dict:
        return {"keywords": list(self.keywords), "origin": self.origin, "parent_doc_id": self.parent_doc_id}

    @classmethod
    def from_dict(cls, data: dict) -> "KeywordSet":
        return cls(tuple(data["keywords"]), data["origin"], data.get("parent_doc_id"))


def flatten_keywords(sets: Sequence[KeywordSet]) -> list[str]:
    return dedup_casefold(k for s in sets for k in s.keywords)


@dataclass
class CorpusSnapshot:
    topic: str
    documents: list[Document]
    stage1_ids: list[str]
    stage2_ids: list[str]
    keyword_log: list[KeywordSet] = field(default_factory=list)

    def __post_init__(self):
        ids = [d.doc_id for d in self.documents]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate document ids in snapshot")
        if set(self.stage1_ids) & set(self.stage2_ids):
            raise ValueError("stage id sets overlap")
        if set(ids) != set(self.stage1_ids) | set(self.stage2_ids):
            raise ValueError("documents must equal stage1 ∪ stage2")
        if any(d.relevance != "relevant" for d in self.documents):
            raise ValueError("snapshot may only hold relevant documents")

    def __len__(self) -> int:
        return len(self.documents)

    def by_id(self) -> dict[str, Document]:
        return {d.doc_id: d for d in self.documents}

    def save(self, run_dir: str | os.PathLike) -> list[Path]:
        corpus_dir = Path(run_dir) / "corpus"
        corpus_dir.mkdir(parents=True, exist_ok=True)
        docs_path = corpus_dir / "documents.jsonl"
        kw_path = corpus_dir / "keywords.json"
        write_jsonl(docs_path, (d.to_dict() for d in self.documents))
        kw_path.write_text(
            json.dumps(
                {
                    "topic": self.topic,
                    "stage1_ids": self.stage1_ids,
                    "stage2_ids": self.stage2_ids,
                    "keyword_log": [k.to_dict() for k in self.keyword_log],
                },
                indent=2, ensure_ascii=False,
            ),
            encoding="utf-8",
        )
        return [docs_path, kw_path]

    @classmethod
    def load(cls, run_dir: str | os.PathLike) -> "CorpusSnapshot":
        corpus_dir = Path(run_dir) / "corpus"
        docs = [Document.from_dict(r) for r in read_jsonl(corpus_dir / "documents.jsonl")]
        meta = json.loads((corpus_dir / "keywords.json").read_text(encoding="utf-8"))
        return cls(
            meta["topic"], docs, meta["stage1_ids"], meta["stage2_ids"],
            [KeywordSet.from_dict(k) for k in meta["keyword_log"]],
        )


@dataclass(frozen=True)
class RetrievalSettings:
    max_results: int = 5
    judge_tokens: int = 1500
    per_doc_keywords: int = 5
    max_expanded_keywords: int = 40
    concurrency: int = 4


class RelevanceExpandingRetriever:
    def __init__(self, source, gateway: Gateway, settings: RetrievalSettings | None = None):
        self.source = source
        self.gateway = gateway
        self.settings = settings or RetrievalSettings()

    def _map(self, fn, items):
        items = list(items)
        if self.settings.concurrency <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.settings.concurrency) as pool:
            return list(pool.map(fn, items))

    def _clip(self, text: str) -> str:
        return truncate_tokens(text, self.settings.judge_tokens, self.gateway.count_tokens)

    def generate_initial_keywords(self, topic: str) -> KeywordSet:
        if not topic.strip():
            raise ValueError("topic must be non-empty")
        request = ChatRequest.make("keyword_gen", topic=topic)
        keywords = self.gateway.complete_parsed(request, parse_keywords)
        return KeywordSet(tuple(dedup_casefold(keywords)), "initial")

    def search_all(self, keywords: Sequence[str]) -> list[Document]:
        """Search every keyword and merge; documents with empty text are dropped."""
        batches = self._map(
            lambda kw: self.source.search(SearchQuery(kw, self.settings.max_results)), keywords
        )
        docs = dedup_merge(batches)
        kept = [d for d in docs if d.text.strip()]
        if len(kept) != len(docs):
            logger.info("dropped %d documents with empty text", len(docs) - len(kept))
        return kept

    def _judge(self, topic: str, doc: Document) -> bool:
        request = ChatRequest.make("rel_filter", topic=topic, title=doc.title, text=self._clip(doc.text))
        try:
            return self.gateway.complete_parsed(
                request, lambda out: parse_verdict(out, "RELEVANT", "IRRELEVANT")
            )
        except ParseFailure:
            logger.warning("unparseable relevance verdict for %s; treating as irrelevant", doc.doc_id)
        except ProviderError as exc:
            logger.warning("relevance judge failed for %s (%s); treating as irrelevant", doc.doc_id, exc)
        return False

    def filter_relevant(
        self, topic: str, docs: Sequence[Document]
    ) -> tuple[list[Document], list[Document]]:
        verdicts = self._map(lambda d: self._judge(topic, d), docs)
        relevant, irrelevant = [], []
        for doc, keep in zip(docs, verdicts):
            if keep:
                relevant.append(doc.replace(relevance="relevant"))
            else:
                irrelevant.append(doc.replace(relevance="irrelevant"))
        return relevant, irrelevant

    def _expand_one(self, topic: str, doc: Document) -> list[str]:
        request = ChatRequest.make(
            "depth_exp", topic=topic, title=doc.title, text=self._clip(doc.text),
            max_keywords=self.settings.per_doc_keywords,
        )
        try:
            return self.gateway.complete_parsed(request, parse_keywords)
        except ParseFailure:
            logger.warning("no expansion keywords parsed for %s; skipping", doc.doc_id)
            return []

    def expand_keywords(
        self, topic: str, relevant_docs: Sequence[Document], prior: Sequence[str] = ()
    ) -> list[KeywordSet]:
        """Per-document expansion sets, deduplicated against ``prior`` and each other.

        Documents contributing nothing new are omitted; the union over the
        returned sets is the expanded keyword set.
        """
        if not relevant_docs:
            raise ValueError("expansion needs at least one relevant document")
        raw = self._map(lambda d: self._expand_one(topic, d), relevant_docs)
        seen = {k.casefold() for k in prior}
        budget = self.settings.max_expanded_keywords
        sets = []
        for doc, keywords in zip(relevant_docs, raw):
            fresh = []
            for kw in keywords[: self.settings.per_doc_keywords]:
                if budget - len(fresh) <= 0:
                    break
                if kw.casefold() not in seen:
                    seen.add(kw.casefold())
                    fresh.append(kw)
            budget -= len(fresh)
            if fresh:
                sets.append(KeywordSet(tuple(fresh), "expanded", doc.doc_id))
        return sets

    def build_corpus(self, topic: str) -> CorpusSnapshot:
        initial = self.generate_initial_keywords(topic)
        stage0 = self.search_all(initial.keywords)
        stage1, rejected = self.filter_relevant(topic, stage0)
        stage1 = [d.replace(retrieval_round=1) for d in stage1]
        logger.info("stage 1: %d retrieved, %d relevant", len(stage0), len(stage1))
        keyword_log = [initial]
        stage2: list[Document] = []
        if stage1:
            expanded = self.expand_keywords(topic, stage1, prior=initial.keywords)
            keyword_log += expanded
            k_ext = flatten_keywords(expanded)
            if k_ext:
                judged = {d.doc_id for d in stage0}
                raw = [d for d in self.search_all(k_ext) if d.doc_id not in judged]
                stage2, _ = self.filter_relevant(topic, raw)
                stage2 = [d.replace(retrieval_round=2) for d in stage2]
                logger.info("stage 2: %d keywords, %d new retrieved, %d relevant", len(k_ext), len(raw), len(stage2))
            else:
                logger.info("stage 2 skipped: no new keywords")
        documents = dedup_merge([stage1, stage2])
        if not documents:
            raise EmptyCorpus(f"no relevant documents found for {topic!r}")
        ids1 = {d.doc_id for d in stage1}
        return CorpusSnapshot(
            topic,
            documents,
            [d.doc_id for d in documents if d.doc_id in ids1],
            [d.doc_id for d in documents if d.doc_id not in ids1],
            keyword_log,
        )
