"""Acceptance criteria, one test (or parametrized family) per criterion.

Each test is marked with its criterion number; the terminal summary prints a
PASS/FAIL line per criterion.
"""

import json
import socket
import time

import numpy as np
import pytest

from convergewriter.config import RunConfig
from convergewriter.clustering import ClusteringResult, kmeans, select_optimal_k, sequential_partition, silhouette
from convergewriter.errors import ContextOverflow
from convergewriter.evaluator import compute_coverage, grade_rubric
from convergewriter.gateway import ChatRequest, Gateway
from convergewriter.mock import HashEmbeddingProvider, MockChatProvider
from convergewriter.outline import build_outline, parse_and_validate
from convergewriter.pipeline import STAGES, run_pipeline
from convergewriter.retrieval import CorpusSnapshot, RelevanceExpandingRetriever
from convergewriter.sources import LocalCorpusSource, embedding_text

from conftest import CORPUS, TOPIC, offline_gateway
from oracles import brute_silhouette, optimal_inertia, sequential_sizes

criterion = pytest.mark.criterion


def planted_blobs(rng, k, per, d, sigma, spread):
    centers = rng.uniform(-spread, spread, size=(k, d))
    X = np.vstack([c + sigma * rng.standard_normal((per, d)) for c in centers])
    return X, np.repeat(np.arange(k), per)


# -- 1 -------------------------------------------------------------------------


@criterion(1, "exact silhouette equals brute-force Rousseeuw oracle (100 instances, 1e-9, <10 s)")
def test_silhouette_oracle_equivalence():
    rng = np.random.default_rng(20240101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 51))
        d = int(rng.integers(1, 9))
        k = int(rng.integers(2, min(n, 8) + 1))
        X = rng.standard_normal((n, d))
        labels = rng.integers(0, k, size=n)
        labels[:2] = [0, 1]  # at least two clusters
        worst = max(worst, abs(silhouette(X, labels) - brute_silhouette(X.tolist(), labels.tolist())))
    elapsed = time.perf_counter() - start
    print(f"max |exact - oracle| = {worst:.2e}, {elapsed:.2f}s")
    assert worst <= 1e-9
    assert elapsed < 10


# -- 2 -------------------------------------------------------------------------


@criterion(2, "sampled silhouette within 0.05 of exact (n=2000, 4 blobs, sample 512, 20 seeds, <30 s)")
def test_sampling_approximation():
    start = time.perf_counter()
    X, labels = planted_blobs(np.random.default_rng(7), 4, 500, 4, 1.5, 5.0)
    exact = silhouette(X, labels)
    errors = [abs(silhouette(X, labels, sample_size=512, seed=s) - exact) for s in range(20)]
    elapsed = time.perf_counter() - start
    print(f"exact={exact:.4f} max error={max(errors):.4f}, {elapsed:.2f}s")
    assert max(errors) <= 0.05
    assert elapsed < 30


# -- 3 -------------------------------------------------------------------------


@criterion(3, "planted k=3 recovered in >=95% of 40 seeds over range [2,6] (<60 s)")
def test_planted_k_recovery():
    start = time.perf_counter()
    hits = 0
    separation, sigma = 10.0, 1.0  # sigma = separation / 10
    for seed in range(40):
        rng = np.random.default_rng(1000 + seed)
        d = 3
        # equilateral triangle of side `separation` in a random 2-D plane
        basis, _ = np.linalg.qr(rng.standard_normal((d, 2)))
        tri = separation * np.array([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
        centers = tri @ basis.T
        X = np.vstack([c + sigma * rng.standard_normal((40, d)) for c in centers])
        hits += select_optimal_k(X, 2, 6, seed=seed).k == 3
    elapsed = time.perf_counter() - start
    print(f"k*=3 in {hits}/40 seeds, {elapsed:.2f}s")
    assert hits >= 38
    assert elapsed < 60


# -- 4 -------------------------------------------------------------------------


def kmeans_fixtures():
    yield "four-point", np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]])
    yield "identical", np.tile([[1.0, 2.0]], (5, 1))
    yield "tiny", np.array([[0.0], [1.0], [3.0]])
    rng = np.random.default_rng(4)
    for i in range(60):
        n, d = int(rng.integers(6, 13)), int(rng.integers(2, 9))
        centers = rng.uniform(-5, 5, size=(3, d))
        yield f"blobs-{i}", centers[np.arange(n) % 3] + 0.4 * rng.standard_normal((n, d))
    snap = RelevanceExpandingRetriever(LocalCorpusSource.from_jsonl(CORPUS), offline_gateway()).build_corpus(TOPIC)
    yield "fixture-corpus", offline_gateway().embed_documents(snap.documents)


@criterion(4, "k-means inertia equals exhaustive global optimum on n<=12 fixtures, k in {2,3}")
def test_kmeans_matches_exhaustive_optimum():
    checked = 0
    for name, X in kmeans_fixtures():
        assert len(X) <= 12
        for k in (2, 3):
            if k > len(X):
                continue
            opt, _ = optimal_inertia(X, k)
            fit = kmeans(X, k)
            assert fit.inertia == pytest.approx(opt, abs=1e-9), (name, k)
            checked += 1
    print(f"{checked} (fixture, k) pairs at the global optimum")


# -- 5 and 9 -------------------------------------------------------------------


@pytest.fixture(scope="module")
def mock_runs(tmp_path_factory):
    """Two independent end-to-end runs of the offline stack, network disabled."""
    root = tmp_path_factory.mktemp("e2e")

    def no_network(*args, **kwargs):
        raise AssertionError("network access attempted during an offline run")

    original = socket.socket.connect
    socket.socket.connect = no_network
    try:
        runs = []
        for name in ("a", "b"):
            gw = offline_gateway()
            start = time.perf_counter()
            manifest = run_pipeline(RunConfig(topic=TOPIC, seed=3), run_dir=root / name, gateway=gw,
                                    source=LocalCorpusSource.from_jsonl(CORPUS))
            runs.append((root / name, manifest, gw, time.perf_counter() - start))
    finally:
        socket.socket.connect = original
    return runs


def _artifact_bytes(run_dir):
    return {p.relative_to(run_dir).as_posix(): p.read_bytes()
            for p in sorted(run_dir.rglob("*")) if p.is_file() and p.name != "manifest.json"}


@criterion(5, "end-to-end offline run: 7 stages, bijective outline, in-cluster citations, byte-identical, <5 s")
def test_end_to_end_mock_run(mock_runs):
    (dir_a, manifest, _, elapsed), (dir_b, manifest_b, _, _) = mock_runs
    print(f"run time {elapsed:.2f}s")
    assert manifest.flags == {s: "done" for s in STAGES}
    snap = CorpusSnapshot.load(dir_a)
    assert len(snap) == 9
    clustering = ClusteringResult.load(dir_a, [d.doc_id for d in snap.documents])

    outline = parse_and_validate((dir_a / "outline.md").read_text(), clustering.k)
    mapping = outline.section_map()
    assert sorted(mapping.values()) == list(range(clustering.k))
    stored = json.loads((dir_a / "outline_map.json").read_text())["map"]
    assert {int(k): v for k, v in stored.items()} == mapping

    assign = clustering.assignments()
    sections = json.loads((dir_a / "citations.json").read_text())["sections"]
    body = [s for s in sections if s["kind"] == "body"]
    assert len(body) == clustering.k
    for s in body:
        assert s["cluster_id"] == mapping[s["index"]]
        assert s["citations"]
        assert all(assign[doc] == s["cluster_id"] for doc in s["citations"].values())

    assert _artifact_bytes(dir_a) == _artifact_bytes(dir_b)
    assert manifest.artifact_hashes() == manifest_b.artifact_hashes()
    assert elapsed < 5


@criterion(9, "no prompt in the end-to-end transcript exceeds the context cap; oversized requests raise")
def test_context_cap_enforced(mock_runs):
    _, _, gw, _ = mock_runs[0]
    cap = gw.max_context_tokens
    assert cap == 24_000
    sizes = [gw.count_tokens(c.prompt) for c in gw.chat.transcript]
    print(f"{len(sizes)} prompts, largest {max(sizes)} tokens, cap {cap}")
    assert sizes and max(sizes) <= cap

    small = Gateway(MockChatProvider(default="unused"), HashEmbeddingProvider(), max_context_tokens=500)
    with pytest.raises(ContextOverflow):
        small.complete(ChatRequest.make("rubric_judge", topic="t", dimension="Depth",
                                        definition="d", article="word " * 2000))
    assert small.chat.calls == 0


# -- 6 -------------------------------------------------------------------------


@criterion(6, "rubric averages 4.77 and 4.86 from the reported dimension scores")
@pytest.mark.parametrize("scores,expected", [((4.93, 4.95, 4.97, 4.22), 4.77), ((4.97, 4.95, 4.93, 4.58), 4.86)])
def test_rubric_arithmetic(scores, expected):
    by_dim = dict(zip(("Relevance", "Breadth", "Depth", "Novelty"), scores))
    judge = MockChatProvider(handlers={"rubric_judge": lambda c: f"SCORE: {by_dim[c.bindings['dimension']]}"})
    result = grade_rubric("t", "An article.", Gateway(judge, HashEmbeddingProvider()))
    assert result.average_2dp == expected


# -- 7 -------------------------------------------------------------------------

FABRICATED = [
    "Medieval monks in northern Scotland brewed a spiced heather ale every winter solstice and traded barrels "
    "for wool with passing Norse merchants along the rocky coast.",
    "The annual chess tournament in the mountain village attracts players from twelve countries who compete "
    "for a carved wooden trophy shaped like a sleeping owl.",
    "Octopuses can taste with their suckers and often rearrange pebbles outside their dens, a behaviour that "
    "marine biologists describe as gardening in shallow tropical reefs.",
]


@criterion(7, "coverage of 7 copied + 3 fabricated paragraphs is exactly 70.0; sources in top-2 (cosine oracle)")
def test_coverage_fixture():
    docs = list(LocalCorpusSource.from_jsonl(CORPUS).documents)
    copied = docs[:7]
    paragraphs = [d.text for d in copied[:4]] + FABRICATED[:2] + [d.text for d in copied[4:]] + FABRICATED[2:]
    article = "# Article\n\n" + "\n\n".join(paragraphs) + "\n"

    judge = MockChatProvider(handlers={
        "support_judge": lambda c: "SUPPORTED" if c.bindings["paragraph"] in c.bindings["document"] else "UNSUPPORTED"
    })
    embedder = HashEmbeddingProvider(512)
    gw = Gateway(judge, embedder)
    percent, judgments = compute_coverage(article, docs, gw)
    assert percent == 70.0
    assert [j.supported for j in judgments] == [True] * 4 + [False] * 2 + [True] * 3 + [False]

    # oracle: plain cosine over the embedder's unit vectors, ties by doc id
    mat = np.array([embedder.vector(embedding_text(d)) for d in docs])
    for j, text in zip(judgments, paragraphs):
        source = next((d for d in copied if d.text == text), None)
        if source is None:
            continue
        sims = mat @ np.array(embedder.vector(text))
        top2 = [docs[i].doc_id for i in sorted(range(len(docs)), key=lambda i: (-sims[i], docs[i].doc_id))[:2]]
        assert source.doc_id in top2
        assert j.top_doc_ids == top2


# -- 8 -------------------------------------------------------------------------


@criterion(8, "sequential five-part partition sizes for corpora of 5, 10, 12, 23")
@pytest.mark.parametrize("n,expected", [(5, [1] * 5), (10, [2] * 5), (12, [3, 3, 2, 2, 2]), (23, [5, 5, 5, 4, 4])])
def test_ablation_partition(n, expected):
    items = [f"d{i:02d}" for i in range(n)]
    parts = sequential_partition(items, 5)
    sizes = [len(p) for p in parts]
    assert sizes == expected == sequential_sizes(n, 5)
    assert [x for p in parts for x in p] == items
    assert max(sizes) - min(sizes) <= 1


# -- 10 ------------------------------------------------------------------------


@criterion(10, "always-invalid outline mock ends in a valid fallback for k = 1..8")
@pytest.mark.parametrize("k", range(1, 9))
def test_outline_repair_totality(k):
    chat = MockChatProvider(handlers={"outline_gen": lambda c: "## Introduction\n## Body\n(no cluster tags)"})
    summaries = {j: f"Cluster {j} covers topic part {j}. It has details." for j in range(k)}
    outline = build_outline("Topic", summaries, Gateway(chat, HashEmbeddingProvider()), max_retries=2)
    assert outline.fallback
    assert len(chat.calls_for("outline_gen")) == 3
    reparsed = parse_and_validate(outline.raw_markdown, k, "Topic")
    assert sorted(reparsed.section_map().values()) == list(range(k))
