"""Bottom-up retrieval-augmented long-form article writing.

Documents are retrieved in two relevance-filtered rounds, clustered by
embedding, summarized as a two-level tree and turned into an outline whose
body sections each map to exactly one cluster.  Sections are written only
from their cluster's documents, so every citation stays traceable.
"""

from .clustering import (
    ClusterAssignment, ClusteringResult, EmbeddingMatrix, KnowledgeCluster, KSelection,
    cluster_corpus, cluster_embeddings, kmeans, partition_corpus, select_optimal_k,
    sequential_partition, silhouette,
)
from .config import RunConfig, build_gateway, build_source, load_config
from .errors import (
    ConfigError, ContextOverflow, ConvergeWriterError, CorruptManifest, EmptyCorpus, InvalidK,
    MissingBinding, MissingLeaf, NoParagraphs, NotFound, ParseFailure, ProviderError,
    SingleCluster, SourceUnavailable, StageFailure,
)
from .evaluator import (
    EvalReport, RubricScores, basic_stats, compute_coverage, evaluate, grade_rubric, split_paragraphs,
)
from .gateway import ChatRequest, Gateway
from .mock import FixtureEmbeddingProvider, HashEmbeddingProvider, MockChatProvider, OfflineChat
from .outline import Outline, OutlineSection, ValidationFailure, build_outline, fallback_outline, parse_and_validate
from .pipeline import RunManifest, STAGES, inspect_run, resume, run_no_clustering_ablation, run_pipeline
from .retrieval import CorpusSnapshot, KeywordSet, RelevanceExpandingRetriever, RetrievalSettings
from .sources import Document, LocalCorpusSource, SearchQuery, WikipediaSource
from .summarizer import ClusterSummary, LeafSummary, SummaryTree, TreeSummarizer
from .writer import ArticleWriter, FinalArticle, SectionDraft, finalize

__version__ = "0.1.0"
