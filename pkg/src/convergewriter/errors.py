"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class ConvergeWriterError(Exception):
    """Base class for all package errors."""


# knowledge source
class SourceUnavailable(ConvergeWriterError):
    pass


class NotFound(ConvergeWriterError):
    pass


# model gateway
class MissingBinding(ConvergeWriterError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"missing binding for placeholder {self.name!r}"


class ProviderError(ConvergeWriterError):
    pass


class ContextOverflow(ConvergeWriterError):
    def __init__(self, tokens: int, cap: int, template_id: str | None = None):
        super().__init__(f"prompt of {tokens} tokens exceeds context cap {cap} ({template_id})")
        self.tokens = tokens
        self.cap = cap
        self.template_id = template_id


class ParseFailure(ConvergeWriterError):
    pass


# retrieval
class EmptyCorpus(ConvergeWriterError):
    pass


# clustering
class InvalidK(ConvergeWriterError, ValueError):
    pass


class SingleCluster(ConvergeWriterError, ValueError):
    pass


# summarizer
class MissingLeaf(ConvergeWriterError, KeyError):
    def __init__(self, doc_id: str):
        super().__init__(doc_id)
        self.doc_id = doc_id

    def __str__(self) -> str:
        return f"no leaf summary for document {self.doc_id!r}"


# evaluator
class NoParagraphs(ConvergeWriterError):
    pass


# pipeline
class ConfigError(ConvergeWriterError):
    pass


class StageFailure(ConvergeWriterError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class CorruptManifest(ConvergeWriterError):
    pass
