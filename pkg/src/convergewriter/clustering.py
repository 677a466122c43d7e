"""K-means with silhouette-based choice of the number of clusters.

Distances are Euclidean.  Document embeddings are L2-normalised before
clustering, which makes Euclidean distance a monotone function of cosine
distance.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidK, SingleCluster
from .rng import child_seed

logger = logging.getLogger(__name__)

MAX_ITER = 300
TOL = 1e-6


@dataclass(frozen=True)
class EmbeddingMatrix:
    rows: np.ndarray
    doc_ids: tuple[str, ...]

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape[0] < 1:
            raise ValueError("embedding matrix needs at least one row")
        if self.rows.shape[0] != len(self.doc_ids):
            raise ValueError("rows and doc_ids are misaligned")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError("doc_ids must be unique")

    @classmethod
    def normalized(cls, rows, doc_ids: Sequence[str]) -> "EmbeddingMatrix":
        rows = np.asarray(rows, dtype=float)
        return cls(rows / np.linalg.norm(rows, axis=1, keepdims=True), tuple(doc_ids))


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int = 0
    history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _inertia(X: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    return float(np.sum((X - centroids[labels]) ** 2))


def _seed_centers(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: of a few D²-sampled candidates keep the best one."""
    n = X.shape[0]
    n_trials = 2 + int(math.log(k))
    chosen = [int(rng.integers(n))]
    closest = cdist(X, X[chosen], "sqeuclidean")[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # every point coincides with a centre already; pick unused indices
            unused = np.setdiff1d(np.arange(n), chosen)
            chosen.append(int(rng.choice(unused)))
            continue
        cands = rng.choice(n, size=n_trials, p=closest / total)
        cand_d = cdist(X[cands], X, "sqeuclidean")
        pots = np.minimum(closest, cand_d).sum(axis=1)
        best = int(np.argmin(pots))
        chosen.append(int(cands[best]))
        closest = np.minimum(closest, cand_d[best])
    return X[chosen].copy()


def _lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int, tol: float) -> ClusterAssignment:
    k = centers.shape[0]
    history = []
    it = 0
    labels = np.zeros(X.shape[0], dtype=int)
    for it in range(1, max_iter + 1):
        d2 = cdist(X, centers, "sqeuclidean")
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(X)), labels].sum()))
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # reseed with the point farthest from its centre, from a cluster that can spare it
            own = d2[np.arange(len(X)), labels]
            donors = counts[labels] > 1
            far = int(np.argmax(np.where(donors, own, -np.inf)))
            counts[labels[far]] -= 1
            labels[far] = j
            counts[j] = 1
            d2[far] = np.inf
            d2[far, j] = 0.0
        new = np.vstack([X[labels == j].mean(axis=0) for j in range(k)])
        shift = float(np.max(np.linalg.norm(new - centers, axis=1)))
        centers = new
        if shift < tol:
            break
    inertia = _inertia(X, labels, centers)
    history.append(inertia)
    return ClusterAssignment(labels, centers, inertia, it, history)


def kmeans(
    X, k: int, seed: int = 0, *, n_init: int = 10, max_iter: int = MAX_ITER, tol: float = TOL
) -> ClusterAssignment:
    """Lloyd's algorithm from ``n_init`` greedy k-means++ starts; lowest inertia wins.

    Deterministic for fixed ``(X, k, seed)``.  Iteration stops once no centroid
    moves more than ``tol`` or after ``max_iter`` rounds.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        run = _lloyd(X, _seed_centers(X, k, rng), max_iter, tol)
        if best is None or run.inertia < best.inertia:
            best = run
    return best


def silhouette(X, labels, sample_size: int | None = None, seed: int = 0) -> float:
    """Mean silhouette coefficient (Rousseeuw).

    With ``sample_size`` set and smaller than ``n``, the mean is taken over a
    uniform sample drawn without replacement; each sampled point's a(i) and b(i)
    still use all points.  Points in singleton clusters score 0.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    n = X.shape[0]
    if labels.shape[0] != n:
        raise ValueError("labels are not aligned with rows")
    uniq, codes = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise SingleCluster("silhouette needs at least two clusters")
    if sample_size is None or sample_size >= n:
        idx = np.arange(n)
    else:
        idx = np.sort(np.random.default_rng(seed).choice(n, size=sample_size, replace=False))
    onehot = np.zeros((n, len(uniq)))
    onehot[np.arange(n), codes] = 1.0
    counts = onehot.sum(axis=0)
    sums = cdist(X[idx], X) @ onehot  # m x k: total distance to each cluster
    own = codes[idx]
    own_count = counts[own]
    rows = np.arange(len(idx))
    with np.errstate(divide="ignore", invalid="ignore"):
        a = sums[rows, own] / (own_count - 1)
        means = sums / counts
    means[rows, own] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.zeros(len(idx))
    ok = (own_count > 1) & (denom > 0)
    s[ok] = (b[ok] - a[ok]) / denom[ok]
    return float(s.mean())


@dataclass
class KSelection:
    k: int
    scores: dict[int, float]
    assignment: ClusterAssignment | None
    degenerate: bool = False


def select_optimal_k(
    X, k_min: int = 2, k_max: int = 8, seed: int = 0, sample_size: int | None = None
) -> KSelection:
    """Run k-means for each k in the range and keep the best mean silhouette.

    ``k_max`` is clamped to ``n - 1``.  Ties go to the smaller k.  With two or
    fewer points no selection is possible and ``k = 1`` is returned flagged
    as degenerate.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n <= 2:
        labels = np.zeros(n, dtype=int)
        centroid = X.mean(axis=0, keepdims=True)
        return KSelection(1, {}, ClusterAssignment(labels, centroid, _inertia(X, labels, centroid)), True)
    k_max = min(k_max, n - 1)
    if k_min < 2 or k_min > k_max:
        raise InvalidK(f"empty or invalid k range [{k_min}, {k_max}] for n={n}")
    sil_seed = child_seed(seed, "silhouette")
    best_k, best_score, best_fit = None, -math.inf, None
    scores = {}
    for k in range(k_min, k_max + 1):
        fit = kmeans(X, k, child_seed(seed, f"kmeans/k={k}"))
        if len(np.unique(fit.labels)) < 2:
            scores[k] = -1.0
            continue
        scores[k] = silhouette(X, fit.labels, sample_size, sil_seed)
        logger.debug("k=%d silhouette=%.4f", k, scores[k])
        if scores[k] > best_score:
            best_k, best_score, best_fit = k, scores[k], fit
    return KSelection(best_k, scores, best_fit)


def canonical_labels(labels: Sequence[int]) -> list[int]:
    """Renumber labels in order of first appearance."""
    mapping: dict[int, int] = {}
    return [mapping.setdefault(int(lab), len(mapping)) for lab in labels]


@dataclass
class KnowledgeCluster:
    cluster_id: int
    doc_ids: list[str]
    summary: str | None = None

    def __post_init__(self):
        if not self.doc_ids:
            raise ValueError("a knowledge cluster must hold at least one document")


@dataclass
class ClusteringResult:
    clusters: list[KnowledgeCluster]
    k: int
    scores: dict[int, float]
    seed: int
    mode: str = "kmeans"
    degenerate: bool = False

    def assignments(self) -> dict[str, int]:
        return {d: c.cluster_id for c in self.clusters for d in c.doc_ids}

    def save(self, run_dir: str | os.PathLike) -> Path:
        path = Path(run_dir) / "clusters" / "assignments.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "k": self.k,
            "mode": self.mode,
            "seed": self.seed,
            "degenerate": self.degenerate,
            "silhouette": {str(k): v for k, v in sorted(self.scores.items())},
            "assignments": self.assignments(),
        }
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False), encoding="utf-8")
        return path

    @classmethod
    def load(cls, run_dir: str | os.PathLike, doc_order: Sequence[str]) -> "ClusteringResult":
        data = json.loads((Path(run_dir) / "clusters" / "assignments.json").read_text(encoding="utf-8"))
        groups: dict[int, list[str]] = {}
        for doc_id in doc_order:
            if doc_id in data["assignments"]:
                groups.setdefault(data["assignments"][doc_id], []).append(doc_id)
        clusters = [KnowledgeCluster(cid, ids) for cid, ids in sorted(groups.items())]
        return cls(
            clusters, data["k"], {int(k): v for k, v in data["silhouette"].items()},
            data["seed"], data["mode"], data["degenerate"],
        )


def _build_clusters(doc_ids: Sequence[str], labels: Sequence[int]) -> list[KnowledgeCluster]:
    labels = canonical_labels(labels)
    groups: dict[int, list[str]] = {}
    for doc_id, lab in zip(doc_ids, labels):
        groups.setdefault(lab, []).append(doc_id)
    return [KnowledgeCluster(cid, ids) for cid, ids in sorted(groups.items())]


def cluster_embeddings(
    matrix: EmbeddingMatrix,
    *,
    k_min: int = 2,
    k_max: int = 8,
    sample_size: int | None = 512,
    seed: int = 0,
) -> ClusteringResult:
    """Knowledge clusters for an embedding matrix; fewer than 4 rows give one cluster."""
    n = len(matrix.doc_ids)
    if n < 4:
        logger.warning("degenerate corpus of %d documents: using a single cluster", n)
        return ClusteringResult([KnowledgeCluster(0, list(matrix.doc_ids))], 1, {}, seed, degenerate=True)
    selection = select_optimal_k(matrix.rows, k_min, k_max, seed, sample_size)
    logger.info("selected k=%d from silhouette table %s", selection.k, selection.scores)
    clusters = _build_clusters(matrix.doc_ids, selection.assignment.labels)
    return ClusteringResult(clusters, selection.k, selection.scores, seed, degenerate=selection.degenerate)


def cluster_corpus(snapshot, gateway, *, k_min=2, k_max=8, sample_size=512, seed=0) -> ClusteringResult:
    """Embed every corpus document and cluster the normalised embeddings."""
    if not len(snapshot):
        raise ValueError("cannot cluster an empty corpus")
    rows = gateway.embed_documents(snapshot.documents)
    matrix = EmbeddingMatrix.normalized(rows, [d.doc_id for d in snapshot.documents])
    return cluster_embeddings(matrix, k_min=k_min, k_max=k_max, sample_size=sample_size, seed=seed)


def sequential_partition(items: Sequence, parts: int = 5) -> list[list]:
    """Split ``items`` in order into ``parts`` contiguous runs differing in size by at most one.

    Larger runs come first.  With fewer items than parts, every item gets its
    own run.
    """
    if parts < 1:
        raise ValueError("parts must be >= 1")
    items = list(items)
    parts = min(parts, len(items)) or 1
    base, extra = divmod(len(items), parts)
    out, start = [], 0
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        out.append(items[start : start + size])
        start += size
    return [p for p in out if p]


def partition_corpus(snapshot, parts: int = 5, seed: int = 0) -> ClusteringResult:
    ids = [d.doc_id for d in snapshot.documents]
    runs = sequential_partition(ids, parts)
    degenerate = len(ids) < parts
    if degenerate:
        logger.warning("corpus of %d documents is smaller than %d parts", len(ids), parts)
    clusters = [KnowledgeCluster(i, run) for i, run in enumerate(runs)]
    return ClusteringResult(clusters, len(clusters), {}, seed, mode="sequential", degenerate=degenerate)
