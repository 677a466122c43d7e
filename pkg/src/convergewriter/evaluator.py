"""Article metrics: length, cited documents, rubric grading and document coverage.

Everything here takes plain Markdown plus a document list, so articles from
other systems can be scored the same way as the pipeline's own.
"""

from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Sequence


from .errors import NoParagraphs, ParseFailure
from .gateway import ChatRequest, Gateway, cosine_scores, rank_by_score
from .parsing import parse_score, parse_verdict
from .sources import Document
from .tokens import truncate_tokens
from .writer import MARKER, FinalArticle, strip_markers

logger = logging.getLogger(__name__)

WORD_SEGMENT = re.compile(r"\w+(?:['’]\w+)*")
WORD_COUNT_METHOD = "unicode \\w+ runs (apostrophe-joined), markers and headings included"
MIN_PARAGRAPH_WORDS = 20

DIMENSIONS: dict[str, str] = {
    "relevance": "How well the article stays on the requested topic, without digressions or unrelated material.",
    "breadth": "How many of the important aspects of the topic the article covers.",
    "depth": "How far the article goes beyond surface description into detailed, specific analysis.",
    "novelty": "Whether the article offers non-obvious connections or perspectives that remain relevant to the topic.",
}

_HEADING = re.compile(r"^\s{0,3}#{1,6}\s")
_BIB_HEADING = re.compile(r"^\s{0,3}#{1,6}\s*(references|bibliography|sources|works cited)\b", re.I)
_COMMENT = re.compile(r"<!--.*?-->", re.S)
_BIB_LINE = re.compile(r"^\s*\[(\d+)\]\s+\S")


def round_half_up(x: float, places: int = 2) -> float:
    return float(Decimal(repr(x)).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


def count_words(text: str) -> int:
    return len(WORD_SEGMENT.findall(text))


def basic_stats(article: FinalArticle | str) -> tuple[int, int]:
    """``(word_length, cited_docs)``.

    For raw Markdown the cited-document count comes from the reference list,
    or failing that from the distinct markers in the text.
    """
    if isinstance(article, FinalArticle):
        return count_words(article.markdown), len({b.doc_id for b in article.bibliography})
    return count_words(article), cited_docs_from_markdown(article)


def cited_docs_from_markdown(markdown: str) -> int:
    in_bib = False
    entries = set()
    for line in markdown.splitlines():
        if _HEADING.match(line):
            in_bib = bool(_BIB_HEADING.match(line))
            continue
        if in_bib and (m := _BIB_LINE.match(line)):
            entries.add(m.group(1))
    if entries:
        return len(entries)
    return len(set(MARKER.findall(markdown)))


# -- rubric -------------------------------------------------------------------


@dataclass(frozen=True)
class RubricScores:
    relevance: float | None
    breadth: float | None
    depth: float | None
    novelty: float | None
    flagged: bool = False

    def __post_init__(self):
        for name, value in self.present.items():
            if not 0.0 <= value <= 5.0:
                raise ValueError(f"{name} score {value} outside [0, 5]")

    @property
    def present(self) -> dict[str, float]:
        scores = {"relevance": self.relevance, "breadth": self.breadth, "depth": self.depth, "novelty": self.novelty}
        return {k: v for k, v in scores.items() if v is not None}

    @property
    def average(self) -> float:
        values = list(self.present.values())
        return math.fsum(values) / len(values) if values else math.nan

    @property
    def average_2dp(self) -> float:
        return round_half_up(self.average, 2)

    def to_dict(self) -> dict:
        return {**asdict(self), "average": self.average, "average_2dp": self.average_2dp}


def grade_rubric(
    topic: str,
    article: FinalArticle | str,
    gateway: Gateway,
    dimensions: Mapping[str, str] = DIMENSIONS,
    article_tokens: int = 20_000,
) -> RubricScores:
    """One judge call per dimension; scores clamped to [0, 5].

    A dimension whose score cannot be parsed after one re-ask is left out of
    the average and the result is flagged.
    """
    markdown = article.markdown if isinstance(article, FinalArticle) else article
    clipped = truncate_tokens(markdown, article_tokens, gateway.count_tokens)
    if len(clipped) < len(markdown):
        logger.warning("article truncated to %d tokens for rubric grading", article_tokens)
    scores: dict[str, float | None] = {}
    for name in ("relevance", "breadth", "depth", "novelty"):
        request = ChatRequest.make(
            "rubric_judge", topic=topic, dimension=name.capitalize(),
            definition=dimensions[name], article=clipped,
        )
        try:
            value = gateway.complete_parsed(request, parse_score, role="judge")
            scores[name] = min(5.0, max(0.0, value))
        except ParseFailure:
            logger.warning("no parseable %s score; dimension left out", name)
            scores[name] = None
    return RubricScores(**scores, flagged=any(v is None for v in scores.values()))


# -- coverage -----------------------------------------------------------------


def split_paragraphs(markdown: str, min_words: int = MIN_PARAGRAPH_WORDS) -> list[str]:
    """Prose paragraphs: blank-line separated, headings and references removed, short ones dropped."""
    paragraphs = []
    in_bib = False
    for block in re.split(r"\n\s*\n", _COMMENT.sub("", markdown)):
        prose = []
        for line in block.splitlines():
            if _HEADING.match(line):
                in_bib = bool(_BIB_HEADING.match(line))
                continue
            if not in_bib and line.strip():
                prose.append(line.strip())
        text = "\n".join(prose)
        if text and count_words(text) >= min_words:
            paragraphs.append(text)
    return paragraphs


@dataclass
class CoverageJudgment:
    paragraph_index: int
    top_doc_ids: list[str]
    supported: bool
    per_doc_verdicts: list[bool | None] = field(default_factory=list)


def _judge_support(gateway: Gateway, paragraph: str, doc: Document, doc_tokens: int) -> bool | None:
    text = truncate_tokens(f"{doc.title}\n\n{doc.text}", doc_tokens, gateway.count_tokens)
    request = ChatRequest.make("support_judge", paragraph=paragraph, document=text)
    try:
        return gateway.complete_parsed(
            request, lambda out: parse_verdict(out, "SUPPORTED", "UNSUPPORTED"), role="judge"
        )
    except ParseFailure:
        logger.warning("unparseable support verdict for %s; counted as unsupported", doc.doc_id)
        return None


def compute_coverage(
    article: FinalArticle | str,
    documents: Sequence[Document],
    gateway: Gateway,
    *,
    top_n: int = 2,
    doc_tokens: int = 1500,
    min_words: int = MIN_PARAGRAPH_WORDS,
    concurrency: int = 4,
) -> tuple[float, list[CoverageJudgment]]:
    """Share of paragraphs backed by at least one of their most similar documents.

    Similar documents are searched over the whole corpus by cosine similarity
    of embeddings, not over the evidence a section was written from.
    """
    if not documents:
        raise ValueError("coverage needs a non-empty corpus")
    markdown = article.markdown if isinstance(article, FinalArticle) else article
    paragraphs = split_paragraphs(markdown, min_words)
    if not paragraphs:
        raise NoParagraphs("article has no eligible paragraphs")
    plain = [strip_markers(p) or p for p in paragraphs]
    doc_matrix = gateway.embed_documents(documents)
    para_matrix = gateway.embed(plain)
    ids = [d.doc_id for d in documents]

    def judge(i: int) -> CoverageJudgment:
        scores = cosine_scores(para_matrix[i], doc_matrix).tolist()
        top = [documents[j] for j in rank_by_score(scores, ids)[:top_n]]
        verdicts = [_judge_support(gateway, plain[i], d, doc_tokens) for d in top]
        return CoverageJudgment(i, [d.doc_id for d in top], any(v is True for v in verdicts), verdicts)

    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        judgments = list(pool.map(judge, range(len(paragraphs))))
    supported = sum(j.supported for j in judgments)
    return 100.0 * supported / len(judgments), judgments


# -- report -------------------------------------------------------------------


@dataclass
class EvalReport:
    word_length: int
    cited_docs: int
    rubric: RubricScores
    coverage_percent: float
    judgments: list[CoverageJudgment]
    embedding_provider: str = ""
    judge_provider: str = ""
    word_count_method: str = WORD_COUNT_METHOD

    def to_dict(self) -> dict:
        return {
            "word_length": self.word_length,
            "cited_docs": self.cited_docs,
            "rubric": self.rubric.to_dict(),
            "coverage_percent": self.coverage_percent,
            "judgments": [asdict(j) for j in self.judgments],
            "embedding_provider": self.embedding_provider,
            "judge_provider": self.judge_provider,
            "word_count_method": self.word_count_method,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)


def evaluate(
    topic: str,
    article: FinalArticle | str,
    documents: Sequence[Document],
    gateway: Gateway,
    dimensions: Mapping[str, str] = DIMENSIONS,
    concurrency: int = 4,
) -> EvalReport:
    words, cited = basic_stats(article)
    rubric = grade_rubric(topic, article, gateway, dimensions)
    percent, judgments = compute_coverage(article, documents, gateway, concurrency=concurrency)
    return EvalReport(
        words, cited, rubric, percent, judgments,
        embedding_provider=gateway.embedder.provider_id,
        judge_provider=gateway.judge.provider_id,
    )
