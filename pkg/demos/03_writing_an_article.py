"""
An article, end to end and offline
==================================

Every pipeline stage writes its artifacts into one run directory: corpus,
clusters, summaries, outline, sections, article and eval.  This script
runs the pipeline with the offline configuration and walks through the
artifacts.  It then stops a second run halfway and resumes it.
"""

import json
import tempfile
from pathlib import Path

from convergewriter import load_config, resume, run_pipeline
from convergewriter.pipeline import inspect_run

HERE = Path(__file__).parent
config = load_config(HERE / "offline.toml", topic="Renewable electricity generation")

run_dir = Path(tempfile.mkdtemp(prefix="convergewriter-"))
manifest = run_pipeline(config, run_dir=run_dir)
print(inspect_run(run_dir))

# the outline names one cluster per body section, each cluster exactly once
print((run_dir / "outline.md").read_text())

# citations: each body section may only cite documents of its own cluster
clusters = json.loads((run_dir / "clusters" / "assignments.json").read_text())["assignments"]
for section in json.loads((run_dir / "citations.json").read_text())["sections"]:
    if section["kind"] == "body":
        cited = sorted(set(section["citations"].values()))
        print(f"section {section['index']} -> cluster {section['cluster_id']}: "
              f"{cited} (clusters {sorted({clusters[d] for d in cited})})")

# the finished article, with a numbered reference list
article = (run_dir / "article_final.md").read_text()
print(article[:1500], "...\n")

# stop a fresh run after the summaries and pick it up again: the retrieval
# and summarization stages are not repeated
partial_dir = Path(tempfile.mkdtemp(prefix="convergewriter-partial-"))
partial = run_pipeline(config, run_dir=partial_dir, stop_after="summaries")
print("after stop:", partial.flags)
resumed = resume(partial_dir)
print("after resume:", resumed.flags)
same = (partial_dir / "article_final.md").read_bytes() == (run_dir / "article_final.md").read_bytes()
print("resumed article identical to the uninterrupted one:", same)
