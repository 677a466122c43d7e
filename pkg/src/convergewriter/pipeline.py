"""Stage orchestration, run-directory persistence and resumption.

A run directory holds every intermediate artifact plus ``manifest.json``,
which records, per stage, its status, the sha256 of each artifact it wrote and
a digest of its inputs (the config and all upstream artifact hashes).  Stages
only read artifacts from disk, so any suffix of the pipeline can be re-run.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .cache import canonical_json
from .clustering import ClusteringResult, cluster_corpus, partition_corpus
from .config import RunConfig, build_gateway, build_source
from .errors import ConfigError, CorruptManifest, StageFailure
from .evaluator import DIMENSIONS, evaluate
from .gateway import Gateway
from .outline import Outline, build_outline
from .retrieval import CorpusSnapshot, RelevanceExpandingRetriever, RetrievalSettings
from .rng import child_seed
from .summarizer import SummarySettings, SummaryTree, TreeSummarizer
from .writer import ArticleWriter, SectionDraft, WriterSettings, render_markdown, slugify

logger = logging.getLogger(__name__)

STAGES = ("corpus", "clusters", "summaries", "outline", "sections", "article", "eval")
MANIFEST = "manifest.json"


def file_sha256(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class StageRecord:
    status: str = "pending"  # pending | done | failed
    artifacts: dict[str, str] = field(default_factory=dict)
    inputs: str = ""
    started_at: str | None = None
    finished_at: str | None = None
    error: str | None = None

    @property
    def done(self) -> bool:
        return self.status == "done"


@dataclass
class RunManifest:
    config: dict
    seed: int
    stages: dict[str, StageRecord] = field(default_factory=lambda: {s: StageRecord() for s in STAGES})
    created_at: str = field(default_factory=_now)
    updated_at: str = field(default_factory=_now)

    @property
    def flags(self) -> dict[str, str]:
        return {name: rec.status for name, rec in self.stages.items()}

    @property
    def complete(self) -> bool:
        return all(rec.done for rec in self.stages.values())

    def artifact_hashes(self) -> dict[str, str]:
        return {p: h for rec in self.stages.values() for p, h in rec.artifacts.items()}

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "stages": {name: rec.__dict__ for name, rec in self.stages.items()},
        }

    def save(self, run_dir: str | os.PathLike) -> None:
        self.updated_at = _now()
        _atomic_write(Path(run_dir) / MANIFEST, json.dumps(self.to_dict(), indent=2, ensure_ascii=False))

    @classmethod
    def load(cls, run_dir: str | os.PathLike) -> "RunManifest":
        path = Path(run_dir) / MANIFEST
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            stages = {name: StageRecord(**data["stages"].get(name, {})) for name in STAGES}
            return cls(data["config"], data["seed"], stages, data["created_at"], data["updated_at"])
        except FileNotFoundError as exc:
            raise CorruptManifest(f"no manifest in {run_dir}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptManifest(f"unreadable manifest {path}: {exc}") from exc


def _config_snapshot(config: RunConfig) -> dict:
    # The run directory is wherever the manifest lives; keeping it out of the
    # snapshot lets two runs of the same config compare equal.
    snap = config.to_dict()
    snap.pop("out_dir", None)
    return snap


class Pipeline:
    """One run directory driven by one config.

    ``gateway`` and ``source`` may be injected (tests, offline demos);
    otherwise they are built from the config, with the response cache in
    ``<run_dir>/cache``.
    """

    def __init__(self, config: RunConfig, run_dir: str | os.PathLike | None = None,
                 gateway: Gateway | None = None, source=None, base_dir: str | os.PathLike = "."):
        if not config.topic.strip():
            raise ConfigError("a topic is required")
        self.config = config
        self.run_dir = Path(run_dir if run_dir is not None else config.out_dir)
        self._gateway = gateway
        self._source = source
        self.base_dir = base_dir
        self.steps: dict[str, Callable[[], list[Path]]] = {
            "corpus": self._corpus,
            "clusters": self._clusters,
            "summaries": self._summaries,
            "outline": self._outline,
            "sections": self._sections,
            "article": self._article,
            "eval": self._eval,
        }

    # -- lazily built collaborators ----------------------------------------

    @property
    def gateway(self) -> Gateway:
        if self._gateway is None:
            self._gateway = build_gateway(self.config, self.run_dir / "cache")
        return self._gateway

    @property
    def source(self):
        if self._source is None:
            self._source = build_source(self.config, self.base_dir)
        return self._source

    # -- manifest bookkeeping ----------------------------------------------

    def hash_artifacts(self, paths) -> dict[str, str]:
        out = {}
        for p in paths:
            rel = Path(p).resolve().relative_to(self.run_dir.resolve()).as_posix()
            out[rel] = file_sha256(self.run_dir / rel)
        return dict(sorted(out.items()))

    def current_hashes(self, record: StageRecord) -> dict[str, str] | None:
        """Hashes of a stage's recorded artifacts as they are on disk, None if one is missing."""
        out = {}
        for rel in record.artifacts:
            path = self.run_dir / rel
            if not path.is_file():
                return None
            out[rel] = file_sha256(path)
        return out

    def input_digest(self, manifest: RunManifest, stage: str) -> str:
        upstream = STAGES[: STAGES.index(stage)]
        payload = {
            "config": manifest.config,
            "upstream": {s: manifest.stages[s].artifacts for s in upstream},
        }
        return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()

    def new_manifest(self) -> RunManifest:
        return RunManifest(_config_snapshot(self.config), self.config.seed)

    # -- execution -----------------------------------------------------------

    def run(self, manifest: RunManifest | None = None, start: str = "corpus",
            stop_after: str | None = None) -> RunManifest:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        manifest = manifest or self.new_manifest()
        first = STAGES.index(start)
        last = STAGES.index(stop_after) if stop_after else len(STAGES) - 1
        for name in STAGES[first:]:
            manifest.stages[name] = StageRecord()
        manifest.save(self.run_dir)
        for name in STAGES[first : last + 1]:
            record = manifest.stages[name]
            record.inputs = self.input_digest(manifest, name)
            record.started_at = _now()
            logger.info("stage %s: start", name)
            try:
                paths = self.steps[name]()
            except Exception as exc:
                record.status = "failed"
                record.error = f"{type(exc).__name__}: {exc}"
                record.finished_at = _now()
                manifest.save(self.run_dir)
                logger.error("stage %s failed: %s", name, exc)
                raise StageFailure(name, exc) from exc
            record.artifacts = self.hash_artifacts(paths)
            record.status = "done"
            record.finished_at = _now()
            manifest.save(self.run_dir)
            logger.info("stage %s: done (%d artifacts)", name, len(paths))
        return manifest

    # -- stages --------------------------------------------------------------

    def _snapshot(self) -> CorpusSnapshot:
        return CorpusSnapshot.load(self.run_dir)

    def _clustering(self, snapshot: CorpusSnapshot) -> ClusteringResult:
        return ClusteringResult.load(self.run_dir, [d.doc_id for d in snapshot.documents])

    def _corpus(self) -> list[Path]:
        cfg = self.config
        settings = RetrievalSettings(
            max_results=cfg.max_results, judge_tokens=cfg.judge_tokens,
            per_doc_keywords=cfg.per_doc_keywords, max_expanded_keywords=cfg.max_expanded_keywords,
            concurrency=cfg.concurrency,
        )
        snapshot = RelevanceExpandingRetriever(self.source, self.gateway, settings).build_corpus(cfg.topic)
        return snapshot.save(self.run_dir)

    def _clusters(self) -> list[Path]:
        cfg = self.config
        snapshot = self._snapshot()
        if cfg.mode == "no_clustering":
            result = partition_corpus(snapshot, cfg.parts, seed=cfg.seed)
        else:
            result = cluster_corpus(
                snapshot, self.gateway, k_min=cfg.k_min, k_max=cfg.k_max,
                sample_size=cfg.sample_size, seed=child_seed(cfg.seed, "clustering"),
            )
        return [result.save(self.run_dir)]

    def _summaries(self) -> list[Path]:
        cfg = self.config
        snapshot = self._snapshot()
        clustering = self._clustering(snapshot)
        settings = SummarySettings(cfg.leaf_budget, cfg.cluster_budget, cfg.summary_input_tokens, cfg.concurrency)
        tree = TreeSummarizer(self.gateway, settings, cfg.topic).summarize_all(snapshot.documents, clustering.clusters)
        return [tree.save(self.run_dir)]

    def _outline(self) -> list[Path]:
        cfg = self.config
        tree = SummaryTree.load(self.run_dir)
        summaries = {c.cluster_id: c.text for c in tree.clusters}
        outline = build_outline(cfg.topic, summaries, self.gateway, cfg.outline_retries, cfg.mapping)
        return outline.save(self.run_dir, cfg.mapping)

    def _writer(self, snapshot: CorpusSnapshot, tree: SummaryTree) -> ArticleWriter:
        cfg = self.config
        settings = WriterSettings(top_m=cfg.top_m, excerpt_tokens=cfg.evidence_tokens, concurrency=cfg.concurrency)
        return ArticleWriter(self.gateway, snapshot.by_id(), tree.leaf_map(), cfg.topic, settings)

    def _sections(self) -> list[Path]:
        cfg = self.config
        snapshot = self._snapshot()
        clustering = self._clustering(snapshot)
        tree = SummaryTree.load(self.run_dir)
        outline = Outline.load(self.run_dir, clustering.k, cfg.mapping)
        writer = self._writer(snapshot, tree)
        body = writer.write_body(outline, clustering.clusters)
        intro, conclusion = writer.frame_article(outline, body)
        drafts = [intro, *body, conclusion]

        sections_dir = self.run_dir / "sections"
        if sections_dir.exists():
            shutil.rmtree(sections_dir)
        sections_dir.mkdir(parents=True)
        paths = []
        for d in drafts:
            path = sections_dir / f"{d.section_index:02d}_{slugify(d.title)}.md"
            path.write_text(f"## {d.title}\n\n{d.text}\n", encoding="utf-8")
            paths.append(path)
        drafts_path = sections_dir / "drafts.json"
        drafts_path.write_text(
            json.dumps([d.to_dict() for d in drafts], indent=2, ensure_ascii=False), encoding="utf-8"
        )
        draft_md = self.run_dir / "article_draft.md"
        draft_md.write_text(render_markdown(cfg.topic, drafts), encoding="utf-8")
        return [*paths, drafts_path, draft_md]

    def _article(self) -> list[Path]:
        snapshot = self._snapshot()
        tree = SummaryTree.load(self.run_dir)
        raw = json.loads((self.run_dir / "sections" / "drafts.json").read_text(encoding="utf-8"))
        drafts = [SectionDraft.from_dict(d) for d in raw]
        article = self._writer(snapshot, tree).polish_and_finalize(drafts)
        final = self.run_dir / "article_final.md"
        final.write_text(article.markdown, encoding="utf-8")
        citations = self.run_dir / "citations.json"
        citations.write_text(article.citations_json(), encoding="utf-8")
        return [final, citations]

    def _eval(self) -> list[Path]:
        cfg = self.config
        snapshot = self._snapshot()
        markdown = (self.run_dir / "article_final.md").read_text(encoding="utf-8")
        report = evaluate(cfg.topic, markdown, snapshot.documents, self.gateway,
                          {**DIMENSIONS, **cfg.rubric}, concurrency=cfg.concurrency)
        path = self.run_dir / "eval" / "report.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.to_json(), encoding="utf-8")
        return [path]


# -- public entry points -----------------------------------------------------


def run_pipeline(config: RunConfig, *, run_dir=None, gateway: Gateway | None = None, source=None,
                 stop_after: str | None = None, base_dir=".") -> RunManifest:
    """Run every stage into ``run_dir`` (default ``config.out_dir``).

    Raises ``StageFailure`` naming the failed stage; the manifest on disk
    records the failure.
    """
    return Pipeline(config, run_dir, gateway, source, base_dir).run(stop_after=stop_after)


def run_no_clustering_ablation(config: RunConfig, **kwargs) -> RunManifest:
    """Same pipeline with clustering replaced by a sequential partition of the corpus."""
    if config.mode != "no_clustering":
        config = replace(config, mode="no_clustering")
    return run_pipeline(config, **kwargs)


def plan_resume(pipeline: Pipeline, manifest: RunManifest, force: bool = False) -> str | None:
    """First stage that must run again, or None when the run is complete and intact.

    A completed stage whose artifacts no longer match their hashes, while its
    inputs are unchanged, has been tampered with: ``CorruptManifest`` unless
    ``force``, in which case the edited artifacts are adopted and everything
    downstream is re-run.
    """
    for name in STAGES:
        record = manifest.stages[name]
        if not record.done:
            return name
        if record.inputs != pipeline.input_digest(manifest, name):
            return name
        current = pipeline.current_hashes(record)
        if current != record.artifacts:
            changed = sorted(p for p in record.artifacts if current is None or current.get(p) != record.artifacts[p])
            if not force:
                raise CorruptManifest(
                    f"stage {name!r} artifacts changed on disk: {', '.join(changed)}; use --force to adopt them"
                )
            if current is None:
                logger.warning("stage %s has missing artifacts; re-running it", name)
                return name
            logger.warning("adopting edited artifacts of stage %s: %s", name, changed)
            record.artifacts = current
    return None


def resume(run_dir: str | os.PathLike, *, force: bool = False, gateway: Gateway | None = None,
           source=None, base_dir=".") -> RunManifest:
    run_dir = Path(run_dir)
    manifest = RunManifest.load(run_dir)
    try:
        config = RunConfig.from_dict({**manifest.config, "out_dir": str(run_dir)})
    except ConfigError as exc:
        raise CorruptManifest(f"manifest config snapshot is invalid: {exc}") from exc
    pipeline = Pipeline(config, run_dir, gateway, source, base_dir)
    start = plan_resume(pipeline, manifest, force)
    if start is None:
        logger.info("run in %s is complete; nothing to do", run_dir)
        return manifest
    logger.info("resuming %s at stage %s", run_dir, start)
    return pipeline.run(manifest, start=start)


def inspect_run(run_dir: str | os.PathLike) -> str:
    """Human-readable manifest summary."""
    manifest = RunManifest.load(run_dir)
    cfg = manifest.config
    lines = [
        f"run directory: {run_dir}",
        f"topic: {cfg.get('topic')}    mode: {cfg.get('mode')}    seed: {manifest.seed}",
        f"created: {manifest.created_at}    updated: {manifest.updated_at}",
        "",
    ]
    for name in STAGES:
        rec = manifest.stages[name]
        when = rec.finished_at or "-"
        lines.append(f"  {name:<10} {rec.status:<8} {len(rec.artifacts):>3} artifacts  {when}")
        if rec.error:
            lines.append(f"             error: {rec.error}")
    report = Path(run_dir) / "eval" / "report.json"
    if manifest.stages["eval"].done and report.is_file():
        data = json.loads(report.read_text(encoding="utf-8"))
        lines += [
            "",
            f"words: {data['word_length']}    cited docs: {data['cited_docs']}    "
            f"rubric avg: {data['rubric']['average_2dp']}    coverage: {data['coverage_percent']:.2f}%",
        ]
    return "\n".join(lines)
