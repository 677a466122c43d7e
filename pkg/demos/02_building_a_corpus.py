"""
Relevance-expanding corpus construction
=======================================

Retrieval runs in two rounds.  Initial keywords are searched, and a judge
keeps the relevant hits.  Each relevant document then suggests new keywords,
and a second search pulls in documents the topic name alone would miss.  The
offline chat stand-in keeps the whole thing reproducible.
"""

from pathlib import Path

from convergewriter import Gateway, HashEmbeddingProvider, LocalCorpusSource, OfflineChat
from convergewriter.retrieval import RelevanceExpandingRetriever

HERE = Path(__file__).parent
TOPIC = "Renewable electricity generation"

source = LocalCorpusSource.from_jsonl(HERE / "data" / "energy_corpus.jsonl")
print(f"{len(source)} documents available in the local corpus")

# the offline model answers from the prompt text: fixed seed keywords, a
# keyword list for relevance, and one scripted expansion
chat = OfflineChat(
    keywords=["solar", "wind"],
    expansions={"Offshore wind power": ["hydroelectric"]},
    relevant_terms=["electricity", "energy", "power"],
)
gateway = Gateway(chat, HashEmbeddingProvider(512))

snapshot = RelevanceExpandingRetriever(source, gateway).build_corpus(TOPIC)

# round one finds solar and wind documents; the distractor about wind
# instruments is filtered out
print("round 1:", snapshot.stage1_ids)

# round two came from keywords proposed by the first-round documents
for ks in snapshot.keyword_log:
    origin = f"from {ks.parent_doc_id}" if ks.parent_doc_id else "initial"
    print(f"  keywords ({origin}): {', '.join(ks.keywords)}")
print("round 2:", snapshot.stage2_ids)

# every retained document was judged relevant and remembers its round
for doc in snapshot.documents:
    print(f"  [{doc.retrieval_round}] {doc.doc_id:<24} {doc.title}")

# model calls, per prompt template
for template in ("keyword_gen", "rel_filter", "depth_exp"):
    print(f"{template}: {len(chat.calls_for(template))} calls")
