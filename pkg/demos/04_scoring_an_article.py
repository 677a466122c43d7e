"""
Scoring any article against a corpus
====================================

The evaluator only needs Markdown and a document list.  It reports word
length, distinct cited documents, a four-dimension rubric, and coverage.
Coverage is the share of paragraphs supported by one of their two most
similar corpus documents.  Here the judge is scripted: a paragraph counts
as supported when a document contains it word for word.
"""

from pathlib import Path

from convergewriter import Gateway, HashEmbeddingProvider, LocalCorpusSource, MockChatProvider
from convergewriter.evaluator import compute_coverage, evaluate

HERE = Path(__file__).parent
docs = list(LocalCorpusSource.from_jsonl(HERE / "data" / "energy_corpus.jsonl").documents)

# two paragraphs lifted from the corpus, one invented
invented = ("Tidal kites tethered to the seabed fly figure-eight loops in the current and were first "
            "tested off the coast of Wales, where they powered a small fishing village for a decade.")
article = "\n\n".join([
    "# Renewable power",
    docs[0].text + " [1]",
    docs[6].text + " [2]",
    invented,
    "## References",
    f"[1] {docs[0].title}",
    f"[2] {docs[6].title}",
])


def judge(call):
    if call.template_id == "rubric_judge":
        return "SCORE: 4.5"
    return "SUPPORTED" if call.bindings["paragraph"] in call.bindings["document"] else "UNSUPPORTED"


gateway = Gateway(MockChatProvider(default=judge), HashEmbeddingProvider(512))

# coverage on its own: two of three paragraphs are backed by the corpus
percent, judgments = compute_coverage(article, docs, gateway)
for j in judgments:
    print(f"paragraph {j.paragraph_index}: top docs {j.top_doc_ids} supported={j.supported}")
print(f"coverage {percent:.1f}%")

# the full report, as written to eval/report.json by the pipeline
report = evaluate("Renewable power", article, docs, gateway)
print(f"words={report.word_length} cited={report.cited_docs} "
      f"rubric={report.rubric.average_2dp} coverage={report.coverage_percent:.1f}")
