"""Knowledge sources: a local JSON Lines corpus and the Wikipedia action API.

Both expose ``search(query)`` and ``fetch_document(doc_id)``.  Documents come
back with ``relevance="unjudged"`` and ``retrieval_round=0``; the retrieval
stage stamps both once a document is admitted.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence
from urllib.parse import urlencode

import httpx

from ._http import send_with_retries
from .errors import NotFound, SourceUnavailable

logger = logging.getLogger(__name__)

Relevance = Literal["unjudged", "relevant", "irrelevant"]


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str
    source: Literal["wikipedia", "local"] = "local"
    url: str | None = None
    retrieval_round: int = 0
    relevance: Relevance = "unjudged"

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if self.retrieval_round not in (0, 1, 2):
            raise ValueError(f"retrieval_round must be 0, 1 or 2, got {self.retrieval_round}")

    def replace(self, **changes) -> "Document":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Document":
        fields = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in fields})


@dataclass(frozen=True)
class SearchQuery:
    keyword: str
    max_results: int = 5

    def __post_init__(self):
        if not self.keyword.strip():
            raise ValueError("keyword must be non-empty")
        if self.max_results < 1:
            raise ValueError("max_results must be >= 1")


def dedup_merge(batches: Iterable[Sequence[Document]]) -> list[Document]:
    """Union of document batches keyed by ``doc_id``.

    The first occurrence wins for every field except ``retrieval_round``, which
    keeps the smallest round seen.  Output follows first-seen order.
    """
    merged: dict[str, Document] = {}
    for batch in batches:
        for doc in batch:
            seen = merged.get(doc.doc_id)
            if seen is None:
                merged[doc.doc_id] = doc
            elif doc.retrieval_round < seen.retrieval_round:
                merged[doc.doc_id] = seen.replace(retrieval_round=doc.retrieval_round)
    return list(merged.values())


def embedding_text(doc: Document) -> str:
    return f"{doc.title}\n\n{doc.text}"


def read_jsonl(path: str | os.PathLike) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    return rows


def write_jsonl(path: str | os.PathLike, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


class LocalCorpusSource:
    """Keyword search over an in-memory corpus loaded from JSON Lines.

    Each line holds ``id``, ``title``, ``text`` and optionally ``url``.  Lines
    without ``id`` get a content hash.  Ranking: documents whose title contains
    the keyword come first, then documents matching only in the body, each
    group ordered by number of occurrences and then corpus order.
    """

    def __init__(self, documents: Sequence[Document]):
        self._docs = tuple(documents)
        self._by_id = {d.doc_id: d for d in self._docs}
        if len(self._by_id) != len(self._docs):
            raise ValueError("duplicate document ids in local corpus")

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "LocalCorpusSource":
        docs = []
        for rec in records:
            text = rec.get("text", "")
            raw_id = rec.get("id") or hashlib.sha256(
                (rec.get("title", "") + "\n" + text).encode("utf-8")
            ).hexdigest()[:16]
            raw_id = str(raw_id)
            doc_id = raw_id if raw_id.startswith("local:") else f"local:{raw_id}"
            docs.append(Document(doc_id, rec.get("title", ""), text, "local", rec.get("url")))
        return cls(docs)

    @classmethod
    def from_jsonl(cls, path: str | os.PathLike) -> "LocalCorpusSource":
        return cls.from_records(read_jsonl(path))

    @property
    def provider_id(self) -> str:
        digest = hashlib.sha256("\n".join(d.doc_id for d in self._docs).encode()).hexdigest()[:12]
        return f"local:{digest}"

    @property
    def documents(self) -> tuple[Document, ...]:
        return self._docs

    def __len__(self) -> int:
        return len(self._docs)

    def search(self, query: SearchQuery) -> list[Document]:
        needle = query.keyword.strip().casefold()
        scored = []
        for pos, doc in enumerate(self._docs):
            in_title = needle in doc.title.casefold()
            hits = doc.text.casefold().count(needle)
            if in_title or hits:
                scored.append((0 if in_title else 1, -hits, pos, doc))
        scored.sort(key=lambda t: t[:3])
        return [doc for *_, doc in scored[: query.max_results]]

    def fetch_document(self, doc_id: str) -> Document:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise NotFound(doc_id) from None


WIKIPEDIA_API = "https://en.wikipedia.org/w/api.php"
DEFAULT_USER_AGENT = "convergewriter/0.1 (research pipeline; set source.user_agent)"


class WikipediaSource:
    """Read-only client for the MediaWiki action API.

    Search uses ``list=search``; full text comes from the TextExtracts
    ``prop=extracts&explaintext=1`` endpoint, one page per request.
    """

    def __init__(
        self,
        *,
        api_url: str = WIKIPEDIA_API,
        user_agent: str = DEFAULT_USER_AGENT,
        timeout: float = 30.0,
        attempts: int = 3,
        backoff: float = 0.5,
        transport: httpx.BaseTransport | None = None,
        sleep=None,
    ):
        self.api_url = api_url
        self.attempts = attempts
        self.backoff = backoff
        self._sleep = sleep
        self._client = httpx.Client(
            timeout=timeout, headers={"User-Agent": user_agent}, transport=transport
        )

    @property
    def provider_id(self) -> str:
        return f"wikipedia:{self.api_url}"

    @property
    def page_base(self) -> str:
        return self.api_url.rsplit("/w/api.php", 1)[0]

    def _get(self, params: dict) -> dict:
        kwargs = {"sleep": self._sleep} if self._sleep else {}
        response = send_with_retries(
            self._client, "GET", self.api_url, params={**params, "format": "json", "formatversion": 2},
            error=SourceUnavailable, attempts=self.attempts, backoff=self.backoff, **kwargs,
        )
        try:
            return response.json()
        except ValueError as exc:
            raise SourceUnavailable("Wikipedia returned non-JSON body") from exc

    def search(self, query: SearchQuery) -> list[Document]:
        data = self._get(
            {"action": "query", "list": "search", "srsearch": query.keyword.strip(),
             "srlimit": query.max_results, "srprop": ""}
        )
        hits = data.get("query", {}).get("search", [])[: query.max_results]
        docs = []
        for hit in hits:
            try:
                doc = self.fetch_document(f"wikipedia:{hit['pageid']}")
            except NotFound:
                continue
            if doc.text.strip():
                docs.append(doc)
            else:
                logger.info("dropping %s (%s): empty extract", doc.doc_id, doc.title)
        return docs

    def fetch_document(self, doc_id: str) -> Document:
        prefix, _, page_id = doc_id.partition(":")
        if prefix != "wikipedia" or not page_id.isdigit():
            raise NotFound(doc_id)
        data = self._get(
            {"action": "query", "prop": "extracts", "explaintext": 1, "pageids": page_id}
        )
        pages = data.get("query", {}).get("pages", [])
        if isinstance(pages, dict):
            pages = list(pages.values())
        if not pages or pages[0].get("missing") or "invalid" in pages[0]:
            raise NotFound(doc_id)
        page = pages[0]
        return Document(
            doc_id=doc_id,
            title=page.get("title", ""),
            text=page.get("extract", "") or "",
            source="wikipedia",
            url=f"{self.page_base}/?curid={page_id}",
        )

    def close(self) -> None:
        self._client.close()


# --- recorded fixtures -------------------------------------------------------


def request_fingerprint(request: httpx.Request) -> str:
    """Stable hash of method + URL with query parameters sorted."""
    params = sorted(request.url.params.multi_items())
    base = str(request.url.copy_with(query=None))
    canonical = f"{request.method} {base}?{urlencode(params)}"
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ReplayTransport(httpx.BaseTransport):
    """Serves responses from ``<fingerprint>.json`` files; misses are connect errors."""

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.requests: list[httpx.Request] = []

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        path = self.directory / f"{request_fingerprint(request)}.json"
        if not path.exists():
            raise httpx.ConnectError(f"no recorded fixture for {request.url}", request=request)
        return httpx.Response(200, content=path.read_bytes(), headers={"Content-Type": "application/json"})


class RecordingTransport(httpx.BaseTransport):
    """Forwards to ``inner`` and stores every successful body for later replay."""

    def __init__(self, directory: str | os.PathLike, inner: httpx.BaseTransport | None = None):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.inner = inner or httpx.HTTPTransport()

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        response = self.inner.handle_request(request)
        response.read()
        if response.status_code == 200:
            (self.directory / f"{request_fingerprint(request)}.json").write_bytes(response.content)
        return response
