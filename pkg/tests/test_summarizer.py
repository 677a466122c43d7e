import logging

import pytest

from convergewriter.clustering import KnowledgeCluster
from convergewriter.errors import MissingLeaf
from convergewriter.gateway import Gateway
from convergewriter.mock import HashEmbeddingProvider, MockChatProvider
from convergewriter.sources import Document
from convergewriter.summarizer import LeafSummary, SummarySettings, SummaryTree, TreeSummarizer
from convergewriter.tokens import approx_tokens


def summarizer(handlers, **settings):
    chat = MockChatProvider(handlers=handlers)
    return TreeSummarizer(Gateway(chat, HashEmbeddingProvider()), SummarySettings(**settings), "topic"), chat


def echo_title(call):
    return f"{call.bindings['title']}-sum"


def test_leaf_summary_echoes_mock():
    s, _ = summarizer({"summarize": echo_title})
    leaf = s.summarize_document(Document("A", "A", "Some body text."))
    assert leaf == LeafSummary("A", "A-sum", approx_tokens("A-sum"))


def test_long_document_is_map_reduced():
    s, chat = summarizer({"summarize": lambda c: "partial"}, input_tokens=100)
    text = "abcd" * 300  # exactly three chunks of 100 tokens
    s.summarize_document(Document("A", "A", text))
    calls = chat.calls_for("summarize")
    assert len(calls) == 4
    assert [c.bindings["title"] for c in calls[:3]] == ["A (part 1/3)", "A (part 2/3)", "A (part 3/3)"]
    assert "".join(c.bindings["text"] for c in calls[:3]) == text
    assert calls[3].bindings["title"] == "A"


def test_over_budget_summary_truncated_with_marker(caplog):
    s, _ = summarizer({"summarize": lambda c: "word " * 500}, leaf_budget=50)
    with caplog.at_level(logging.WARNING):
        leaf = s.summarize_document(Document("A", "A", "body"))
    assert leaf.text.endswith(" [...]") and leaf.token_count <= 50
    assert any("exceeded 50 tokens" in r.message for r in caplog.records)
    assert s.summarize_document(Document("A", "A", "body")) == leaf


def test_blank_leaf_falls_back_to_leading_sentences():
    s, _ = summarizer({"summarize": lambda c: "  "})
    leaf = s.summarize_document(Document("A", "A", "One. Two. Three. Four."))
    assert leaf.text == "One. Two. Three."


def test_cluster_summary_echoes_mock():
    s, chat = summarizer({"cluster_summarize": lambda c: "C-sum"})
    leaves = [LeafSummary("B", "B-sum", 2), LeafSummary("A", "A-sum", 2)]
    root = s.summarize_cluster(KnowledgeCluster(0, ["A", "B"]), leaves)
    assert root.text == "C-sum" and root.source_leaf_ids == ("A", "B")
    (call,) = chat.transcript
    assert call.bindings["summaries"] == "[A] A-sum\n\n[B] B-sum"


def test_missing_leaf():
    s, _ = summarizer({"cluster_summarize": lambda c: "x"})
    with pytest.raises(MissingLeaf) as err:
        s.summarize_cluster(KnowledgeCluster(0, ["A", "B"]), [LeafSummary("A", "A-sum", 2)])
    assert err.value.doc_id == "B"


def test_forty_leaves_two_batches_plus_reduce():
    s, chat = summarizer({"cluster_summarize": lambda c: "reduced"}, input_tokens=6000)
    leaves = [LeafSummary(f"d{i:02d}", "x" * 1200, 300) for i in range(40)]
    s.summarize_cluster(KnowledgeCluster(0, [l.doc_id for l in leaves]), leaves)
    calls = chat.calls_for("cluster_summarize")
    # oracle: ceil(40 * 300 / 6000) = 2 batches, then one reduce over the partials
    assert len(calls) == -(-40 * 300 // 6000) + 1 == 3
    assert calls[0].bindings["summaries"].count("[d") == 20
    assert calls[1].bindings["summaries"].count("[d") == 20
    assert calls[2].bindings["summaries"] == "[part 1] reduced\n\n[part 2] reduced"


def test_summarize_all_and_round_trip(tmp_path):
    s, _ = summarizer({"summarize": echo_title, "cluster_summarize": lambda c: "root"}, concurrency=3)
    docs = [Document(i, i, f"text {i}") for i in "ABC"]
    tree = s.summarize_all(docs, [KnowledgeCluster(0, ["A", "C"]), KnowledgeCluster(1, ["B"])])
    assert [l.text for l in tree.leaves] == ["A-sum", "B-sum", "C-sum"]
    assert [c.source_leaf_ids for c in tree.clusters] == [("A", "C"), ("B",)]
    tree.save(tmp_path)
    assert SummaryTree.load(tmp_path) == tree
