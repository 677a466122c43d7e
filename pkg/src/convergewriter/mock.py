"""Deterministic offline providers.

``MockChatProvider`` answers from a digest map or per-template handlers and
records a transcript of every call.  ``OfflineChat`` adds extractive handlers
for every template so the whole pipeline runs without a model; the answers
are derived from the prompt bindings alone, so runs are reproducible.
"""

from __future__ import annotations

import hashlib
import re
import threading
from collections import Counter
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ProviderError
from .providers import ChatCall
from .text import STOPWORDS, WORD, content_words, sentences

Handler = Callable[[ChatCall], str]


class MockChatProvider:
    def __init__(
        self,
        responses: Mapping[str, str] | None = None,
        handlers: Mapping[str, Handler] | None = None,
        default: str | Handler | None = None,
        provider_id: str = "mock-chat",
    ):
        self.responses = dict(responses or {})
        self.handlers = dict(handlers or {})
        self.default = default
        self.provider_id = provider_id
        self.transcript: list[ChatCall] = []
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return len(self.transcript)

    def calls_for(self, template_id: str) -> list[ChatCall]:
        return [c for c in self.transcript if c.template_id == template_id]

    def chat(self, call: ChatCall) -> str:
        with self._lock:
            self.transcript.append(call)
        if call.digest in self.responses:
            return self.responses[call.digest]
        handler = self.handlers.get(call.template_id)
        if handler is not None:
            return handler(call)
        if callable(self.default):
            return self.default(call)
        if self.default is not None:
            return self.default
        raise ProviderError(f"mock has no response for {call.template_id} ({call.digest[:12]})")


def _hash_int(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


class HashEmbeddingProvider:
    """Feature-hashed bag of words; texts sharing vocabulary land close together."""

    batch_size = 256

    def __init__(self, dim: int = 8):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.provider_id = f"hash-embedding:{dim}"
        self.calls = 0

    def vector(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim)
        for word in WORD.findall(text.lower()):
            if word in STOPWORDS:
                continue
            h = _hash_int(word)
            v[h % self.dim] += 1.0 if (h >> 32) & 1 else -1.0
        if not v.any():
            rng = np.random.default_rng(_hash_int(text))
            v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls += 1
        return [self.vector(t).tolist() for t in texts]


class FixtureEmbeddingProvider:
    """Looks vectors up by exact text, falling back to hashing for the rest."""

    batch_size = 256

    def __init__(self, vectors: Mapping[str, Sequence[float]], fallback_dim: int | None = None):
        self.vectors = {k: np.asarray(v, dtype=float) for k, v in vectors.items()}
        dims = {v.shape[0] for v in self.vectors.values()}
        dim = dims.pop() if dims else (fallback_dim or 8)
        self.fallback = HashEmbeddingProvider(fallback_dim or dim)
        self.provider_id = "fixture-embedding:" + hashlib.sha256(
            repr(sorted((k, v.tolist()) for k, v in self.vectors.items())).encode()
        ).hexdigest()[:12]

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for t in texts:
            v = self.vectors.get(t)
            out.append((v if v is not None else self.fallback.vector(t)).tolist())
        return out


# --- extractive offline handlers --------------------------------------------


def _short(text: str, words: int) -> str:
    parts = text.split()
    out = " ".join(parts[:words])
    return out.rstrip(".,;:")


class OfflineChat(MockChatProvider):
    """Extractive stand-in for a chat model, driven only by prompt bindings."""

    def __init__(
        self,
        keywords: Iterable[str] | None = None,
        expansions: Mapping[str, Sequence[str]] | None = None,
        relevant_terms: Iterable[str] | None = None,
        rubric_score: float = 4.0,
        responses: Mapping[str, str] | None = None,
        handlers: Mapping[str, Handler] | None = None,
        provider_id: str = "offline-chat",
    ):
        self.keywords = list(keywords) if keywords is not None else None
        self.expansions = dict(expansions or {})
        self.relevant_terms = [t.casefold() for t in relevant_terms] if relevant_terms is not None else None
        self.rubric_score = rubric_score
        base = {
            "keyword_gen": self._keywords,
            "rel_filter": self._relevance,
            "depth_exp": self._expand,
            "summarize": self._summarize,
            "cluster_summarize": self._cluster_summary,
            "outline_gen": self._outline,
            "section_gen": self._section,
            "intro_gen": self._intro,
            "conclusion_gen": self._conclusion,
            "refine": lambda call: call.bindings["text"],
            "rubric_judge": lambda call: f"SCORE: {self.rubric_score}",
            "support_judge": self._support,
        }
        base.update(handlers or {})
        super().__init__(responses=responses, handlers=base, provider_id=provider_id)

    def _keywords(self, call: ChatCall) -> str:
        kws = self.keywords if self.keywords is not None else [call.bindings["topic"]]
        return "KEYWORDS: " + ", ".join(kws)

    def _relevance(self, call: ChatCall) -> str:
        b = call.bindings
        terms = self.relevant_terms
        if terms is None:
            terms = content_words(b["topic"])
        haystack = (b["title"] + "\n" + b["text"]).casefold()
        return "RELEVANT" if any(t in haystack for t in terms) else "IRRELEVANT"

    def _expand(self, call: ChatCall) -> str:
        b = call.bindings
        if b["title"] in self.expansions:
            kws = list(self.expansions[b["title"]])
        else:
            topic = set(content_words(b["topic"]))
            counts = Counter(w for w in content_words(b["text"]) if w not in topic)
            kws = [w for w, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:2]]
        return "KEYWORDS: " + ", ".join(kws) if kws else "KEYWORDS: none"

    def _summarize(self, call: ChatCall) -> str:
        return " ".join(sentences(call.bindings["text"])[:2])

    def _cluster_summary(self, call: ChatCall) -> str:
        firsts = []
        for block in call.bindings["summaries"].split("\n\n"):
            block = re.sub(r"^\[[^\]]*\]\s*", "", block.strip())
            sent = sentences(block)
            if sent:
                firsts.append(sent[0])
        return " ".join(firsts)

    def _outline(self, call: ChatCall) -> str:
        b = call.bindings
        blocks = re.findall(r"\[CLUSTER (\d+)\]\n(.*?)(?=\n\[CLUSTER \d+\]|\Z)", b["clusters"], re.S)
        lines = [f"# {b['topic']}", "", "## Introduction", ""]
        for cid, summary in blocks:
            sent = sentences(summary) or [f"Cluster {cid}"]
            lines.append(f"## {_short(sent[0], 8)}")
            lines.append(f"<!-- cluster: {cid} -->")
            for extra in sent[1:3]:
                lines.append(f"- {_short(extra, 10)}")
            lines.append("")
        lines += ["## Conclusion", ""]
        return "\n".join(lines)

    def _section(self, call: ChatCall) -> str:
        paras = []
        for num, summary in re.findall(r"^\[(\d+)\][^\n]*\nSummary: (.*)$", call.bindings["evidence"], re.M):
            text = " ".join(sentences(summary)[:2])
            if text:
                paras.append(f"{text} [{num}]")
        return "\n\n".join(paras)

    def _digest_titles(self, call: ChatCall) -> list[str]:
        return re.findall(r"^\[SECTION \d+\] (.*)$", call.bindings["digests"], re.M)

    def _intro(self, call: ChatCall) -> str:
        titles = self._digest_titles(call)
        return (
            f"This article surveys {call.bindings['topic']} using only the documents gathered for it. "
            f"It is organised in {len(titles)} parts: " + "; ".join(titles) + "."
        )

    def _conclusion(self, call: ChatCall) -> str:
        titles = self._digest_titles(call)
        return (
            f"Taken together, the sections on " + "; ".join(titles)
            + f" give a grounded picture of {call.bindings['topic']}."
        )

    def _support(self, call: ChatCall) -> str:
        para = content_words(re.sub(r"\[\d+\]", " ", call.bindings["paragraph"]))
        doc = set(content_words(call.bindings["document"]))
        if not para:
            return "UNSUPPORTED"
        share = sum(w in doc for w in para) / len(para)
        return "SUPPORTED" if share >= 0.6 else "UNSUPPORTED"
