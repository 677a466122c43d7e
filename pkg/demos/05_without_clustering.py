"""
Ablation: sequential parts instead of clusters
==============================================

The no-clustering variant keeps the pipeline the same but splits the corpus
into five contiguous parts in retrieval order.  On the energy corpus the
clusters are topic-pure, while the sequential parts mix topics.
"""

import tempfile
from pathlib import Path

from convergewriter import load_config, run_no_clustering_ablation, run_pipeline
from convergewriter.clustering import ClusteringResult, sequential_partition
from convergewriter.retrieval import CorpusSnapshot

HERE = Path(__file__).parent
config = load_config(HERE / "offline.toml", topic="Renewable electricity generation")


def topic_of(doc_id):
    return doc_id.split(":", 1)[1].split("-", 1)[0]


def groups(run_dir):
    snap = CorpusSnapshot.load(run_dir)
    result = ClusteringResult.load(run_dir, [d.doc_id for d in snap.documents])
    return [[topic_of(d) for d in c.doc_ids] for c in result.clusters]


full_dir = Path(tempfile.mkdtemp(prefix="cw-full-"))
run_pipeline(config, run_dir=full_dir)
print("clusters:        ", groups(full_dir))

seq_dir = Path(tempfile.mkdtemp(prefix="cw-seq-"))
run_no_clustering_ablation(config, run_dir=seq_dir)
print("sequential parts:", groups(seq_dir))

# part sizes differ by at most one, larger parts first
for n in (5, 10, 12, 23):
    print(n, [len(p) for p in sequential_partition(range(n), 5)])
