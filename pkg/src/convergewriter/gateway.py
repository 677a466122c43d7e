"""Single access point for chat completion, embedding and reranking.

The gateway renders prompts from the template registry, enforces the context
cap before any call leaves the process, consults the response cache and caps
the number of in-flight provider calls.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, TypeVar

import numpy as np

from .cache import cache_key
from .errors import ContextOverflow, ParseFailure, ProviderError
from .prompts import REASK_NOTE, get_template
from .providers import ChatCall
from .sources import Document, embedding_text
from .tokens import TokenCounter, approx_tokens, truncate_tokens

logger = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_CONTEXT_CAP = 24_000


@dataclass(frozen=True)
class ChatRequest:
    template_id: str
    bindings: Mapping[str, str] = field(default_factory=dict)
    max_output_tokens: int = 1024
    temperature: float = 0.7
    attempt: int = 0

    def __post_init__(self):
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")

    @classmethod
    def make(cls, template_id: str, **bindings) -> "ChatRequest":
        """Build a request with the template's default decoding settings."""
        template = get_template(template_id)
        return cls(
            template_id,
            {k: str(v) for k, v in bindings.items()},
            max_output_tokens=template.max_output_tokens,
            temperature=template.temperature,
        )

    def reask(self) -> "ChatRequest":
        return ChatRequest(
            self.template_id, self.bindings, self.max_output_tokens, self.temperature, self.attempt + 1
        )


def cosine_scores(query: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    qn = np.linalg.norm(query)
    mn = np.linalg.norm(matrix, axis=1)
    return (matrix @ query) / np.maximum(mn * qn, 1e-300)


def rank_by_score(scores: Sequence[float], ids: Sequence[str]) -> list[int]:
    """Indices by descending score; equal scores fall back to ascending id."""
    return sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))


class Gateway:
    def __init__(
        self,
        chat,
        embedder,
        *,
        judge=None,
        reranker=None,
        cache=None,
        max_context_tokens: int = DEFAULT_CONTEXT_CAP,
        token_counter: TokenCounter = approx_tokens,
        max_in_flight: int = 4,
        embed_max_tokens: int = 2048,
    ):
        if max_context_tokens <= 0:
            raise ValueError("max_context_tokens must be positive")
        self.chat = chat
        self.judge = judge or chat
        self.embedder = embedder
        self.reranker = reranker
        self.cache = cache
        self.max_context_tokens = max_context_tokens
        self.count_tokens = token_counter
        self.embed_max_tokens = embed_max_tokens
        self._slots = threading.BoundedSemaphore(max_in_flight)

    # -- chat ---------------------------------------------------------------

    def render(self, request: ChatRequest) -> str:
        prompt = get_template(request.template_id).render(request.bindings)
        if request.attempt:
            prompt += REASK_NOTE
        return prompt

    def _provider(self, role: str):
        return self.judge if role == "judge" else self.chat

    def canonical_request(self, request: ChatRequest) -> dict:
        return {
            "template_id": request.template_id,
            "prompt": self.render(request),
            "temperature": request.temperature,
            "max_output_tokens": request.max_output_tokens,
        }

    def request_digest(self, request: ChatRequest, role: str = "chat") -> str:
        provider = self._provider(role)
        return cache_key(provider.provider_id, "chat", self.canonical_request(request))

    def fits(self, text: str) -> bool:
        return self.count_tokens(text) <= self.max_context_tokens

    def complete(self, request: ChatRequest, role: str = "chat") -> str:
        provider = self._provider(role)
        canonical = self.canonical_request(request)
        prompt = canonical["prompt"]
        n_tokens = self.count_tokens(prompt)
        if n_tokens > self.max_context_tokens:
            raise ContextOverflow(n_tokens, self.max_context_tokens, request.template_id)
        digest = cache_key(provider.provider_id, "chat", canonical)
        if self.cache is not None:
            hit = self.cache.get(digest)
            if hit is not None:
                return hit
        call = ChatCall(
            template_id=request.template_id,
            prompt=prompt,
            temperature=request.temperature,
            max_output_tokens=request.max_output_tokens,
            digest=digest,
            bindings=dict(request.bindings),
            attempt=request.attempt,
        )
        with self._slots:
            try:
                text = provider.chat(call)
            except ProviderError:
                raise
            except Exception as exc:
                raise ProviderError(f"{request.template_id}: {exc}") from exc
        if self.cache is not None:
            self.cache.put(digest, canonical, text)
        return text

    def complete_parsed(
        self, request: ChatRequest, parse: Callable[[str], T], role: str = "chat"
    ) -> T:
        """Complete and parse; on ``ParseFailure`` re-ask once, then re-raise."""
        try:
            return parse(self.complete(request, role))
        except ParseFailure as first:
            logger.info("re-asking %s after parse failure: %s", request.template_id, first)
        return parse(self.complete(request.reask(), role))

    # -- embeddings ---------------------------------------------------------

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """L2-normalised embeddings, one row per input text, same order."""
        if not texts:
            return np.empty((0, 0))
        for t in texts:
            if not t:
                raise ValueError("cannot embed an empty text")
        pid = self.embedder.provider_id
        keys = [cache_key(pid, "embeddings", {"input": t}) for t in texts]
        vectors: list = [None] * len(texts)
        missing = []
        for i, key in enumerate(keys):
            hit = self.cache.get(key) if self.cache is not None else None
            if hit is not None:
                vectors[i] = hit
            else:
                missing.append(i)
        batch = getattr(self.embedder, "batch_size", 64)
        for start in range(0, len(missing), batch):
            idx = missing[start : start + batch]
            with self._slots:
                try:
                    out = self.embedder.embed([texts[i] for i in idx])
                except ProviderError:
                    raise
                except Exception as exc:
                    raise ProviderError(f"embedding failed: {exc}") from exc
            for i, vec in zip(idx, out):
                vec = [float(x) for x in vec]
                vectors[i] = vec
                if self.cache is not None:
                    self.cache.put(keys[i], {"input": texts[i]}, vec)
        matrix = np.asarray(vectors, dtype=float)
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ProviderError("embedding provider returned a zero vector")
        return matrix / norms

    def embed_documents(self, docs: Sequence[Document]) -> np.ndarray:
        return self.embed(
            [truncate_tokens(embedding_text(d), self.embed_max_tokens, self.count_tokens) for d in docs]
        )

    # -- reranking ----------------------------------------------------------

    def rerank(self, query: str, candidates: Sequence[Document], top_m: int) -> list[Document]:
        """Top ``top_m`` candidates by relevance to ``query``.

        Uses the external reranker when configured, else cosine similarity of
        embeddings.  Ties are ordered by ascending ``doc_id``.
        """
        if top_m < 1:
            raise ValueError("top_m must be >= 1")
        if not candidates:
            return []
        if self.reranker is not None:
            texts = [
                truncate_tokens(embedding_text(d), self.embed_max_tokens, self.count_tokens)
                for d in candidates
            ]
            with self._slots:
                scores = list(self.reranker.score(query, texts))
        else:
            q = self.embed([query])[0]
            scores = cosine_scores(q, self.embed_documents(candidates)).tolist()
        order = rank_by_score(scores, [d.doc_id for d in candidates])
        return [candidates[i] for i in order[:top_m]]
