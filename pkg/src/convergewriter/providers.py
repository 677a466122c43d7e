"""HTTP model providers speaking the OpenAI-compatible inference protocol.

Any server exposing ``/v1/chat/completions`` and ``/v1/embeddings`` works
(vLLM, llama.cpp server, hosted APIs).  An optional reranker talks to a
``/v1/rerank`` endpoint of the Jina/Cohere shape.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import httpx

from ._http import send_with_retries
from .errors import ConfigError, ProviderError


@dataclass(frozen=True)
class ChatCall:
    """What a chat provider receives for one completion."""

    template_id: str
    prompt: str
    temperature: float
    max_output_tokens: int
    digest: str
    bindings: Mapping[str, str] = field(default_factory=dict)
    attempt: int = 0


def _api_key(env_name: str | None) -> str | None:
    if not env_name:
        return None
    key = os.environ.get(env_name)
    if key is None:
        raise ConfigError(f"environment variable {env_name} is not set")
    return key


class _HTTPProvider:
    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key_env: str | None = None,
        timeout: float = 120.0,
        attempts: int = 3,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.attempts = attempts
        headers = {"Content-Type": "application/json"}
        key = _api_key(api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    @property
    def provider_id(self) -> str:
        return f"{type(self).__name__}:{self.base_url}:{self.model}"

    def _post(self, path: str, payload: dict) -> dict:
        response = send_with_retries(
            self._client, "POST", f"{self.base_url}{path}", json=payload,
            error=ProviderError, attempts=self.attempts,
        )
        try:
            return response.json()
        except ValueError as exc:
            raise ProviderError(f"non-JSON response from {path}") from exc

    def close(self) -> None:
        self._client.close()


class OpenAIChatProvider(_HTTPProvider):
    def chat(self, call: ChatCall) -> str:
        data = self._post(
            "/v1/chat/completions",
            {
                "model": self.model,
                "messages": [{"role": "user", "content": call.prompt}],
                "temperature": call.temperature,
                "max_tokens": call.max_output_tokens,
            },
        )
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat completion: {str(data)[:200]}") from exc
        return content or ""


class OpenAIEmbeddingProvider(_HTTPProvider):
    batch_size = 64

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        data = self._post("/v1/embeddings", {"model": self.model, "input": list(texts)})
        try:
            items = sorted(data["data"], key=lambda item: item["index"])
            vectors = [item["embedding"] for item in items]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"malformed embedding response: {str(data)[:200]}") from exc
        if len(vectors) != len(texts):
            raise ProviderError(f"expected {len(texts)} embeddings, got {len(vectors)}")
        return vectors


class HTTPReranker(_HTTPProvider):
    def score(self, query: str, texts: Sequence[str]) -> list[float]:
        data = self._post(
            "/v1/rerank", {"model": self.model, "query": query, "documents": list(texts)}
        )
        scores = [float("-inf")] * len(texts)
        try:
            for item in data["results"]:
                scores[item["index"]] = float(item["relevance_score"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed rerank response: {str(data)[:200]}") from exc
        return scores
