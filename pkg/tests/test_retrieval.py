import logging

import pytest

from convergewriter.errors import EmptyCorpus, ParseFailure
from convergewriter.gateway import Gateway
from convergewriter.mock import HashEmbeddingProvider, MockChatProvider
from convergewriter.parsing import parse_keywords, parse_verdict
from convergewriter.retrieval import (
    CorpusSnapshot,
    KeywordSet,
    RelevanceExpandingRetriever,
    RetrievalSettings,
    flatten_keywords,
)
from convergewriter.sources import Document, LocalCorpusSource

from conftest import CORPUS, TOPIC, offline_gateway


def retriever(handlers, source=None, **settings):
    chat = MockChatProvider(handlers=handlers)
    gw = Gateway(chat, HashEmbeddingProvider())
    src = source or LocalCorpusSource([])
    return RelevanceExpandingRetriever(src, gw, RetrievalSettings(concurrency=1, **settings)), chat


# -- parsers -------------------------------------------------------------------


def test_parse_keywords_formats():
    assert parse_keywords("1. solar sail\n2. radiation pressure\n3. solar sail") == ["solar sail", "radiation pressure"]
    assert parse_keywords("A; B; C") == ["A", "B", "C"]
    assert parse_keywords("KEYWORDS: x, y\nsome chatter") == ["x", "y"]
    assert parse_keywords("<think>ponder, ponder</think>\n- one\n- two") == ["one", "two"]


def test_parse_keywords_rejects_prose():
    with pytest.raises(ParseFailure):
        parse_keywords("I think this topic is really interesting and deserves careful study.")


def test_parse_verdict():
    assert parse_verdict("RELEVANT", "RELEVANT", "IRRELEVANT") is True
    assert parse_verdict("Verdict: irrelevant", "RELEVANT", "IRRELEVANT") is False
    assert parse_verdict("This is NOT relevant", "RELEVANT", "IRRELEVANT") is False
    with pytest.raises(ParseFailure):
        parse_verdict("maybe", "RELEVANT", "IRRELEVANT")


# -- initial keywords ----------------------------------------------------------


def test_initial_keywords_dedup():
    r, _ = retriever({"keyword_gen": lambda c: "1. solar sail\n2. radiation pressure\n3. solar sail"})
    ks = r.generate_initial_keywords("solar sails")
    assert ks == KeywordSet(("solar sail", "radiation pressure"), "initial")


def test_initial_keywords_semicolons():
    r, _ = retriever({"keyword_gen": lambda c: "A; B; C"})
    assert r.generate_initial_keywords("t").keywords == ("A", "B", "C")


def test_initial_keywords_prose_twice_fails():
    r, chat = retriever({"keyword_gen": lambda c: "Here is a long answer without any list in it at all, sorry."})
    with pytest.raises(ParseFailure):
        r.generate_initial_keywords("t")
    assert len(chat.calls_for("keyword_gen")) == 2
    assert chat.transcript[1].attempt == 1


def test_keyword_set_invariants():
    with pytest.raises(ValueError):
        KeywordSet(("a",), "expanded")
    with pytest.raises(ValueError):
        KeywordSet(("a",), "initial", "doc")


# -- relevance filter ----------------------------------------------------------


def _d(i):
    return Document(str(i), f"doc {i}", f"text {i}")


def test_filter_relevant_partitions():
    verdict = {"doc 1": "RELEVANT", "doc 2": "IRRELEVANT", "doc 3": "RELEVANT"}
    r, _ = retriever({"rel_filter": lambda c: verdict[c.bindings["title"]]})
    rel, irr = r.filter_relevant("t", [_d(1), _d(2), _d(3)])
    assert [d.doc_id for d in rel] == ["1", "3"] and [d.doc_id for d in irr] == ["2"]
    assert {d.relevance for d in rel} == {"relevant"} and irr[0].relevance == "irrelevant"
    assert r.filter_relevant("t", []) == ([], [])


def test_filter_fails_closed_on_unparseable(caplog):
    r, chat = retriever({"rel_filter": lambda c: "RELEVANT" if c.bindings["title"] == "doc 1" else "hmm?"})
    with caplog.at_level(logging.WARNING):
        rel, irr = r.filter_relevant("t", [_d(1), _d(4)])
    assert [d.doc_id for d in rel] == ["1"] and [d.doc_id for d in irr] == ["4"]
    assert len([c for c in chat.transcript if c.bindings.get("title") == "doc 4"]) == 2
    assert any("4" in rec.message and "irrelevant" in rec.message for rec in caplog.records)


def test_filter_truncates_long_documents():
    seen = []
    r, _ = retriever({"rel_filter": lambda c: seen.append(c.bindings["text"]) or "RELEVANT"}, judge_tokens=10)
    r.filter_relevant("t", [Document("x", "x", "y" * 1000)])
    assert seen == ["y" * 40]


# -- depth expansion -----------------------------------------------------------


def test_expand_union_minus_prior():
    outs = {"doc 1": "a, b", "doc 2": "b, c"}
    r, _ = retriever({"depth_exp": lambda c: outs[c.bindings["title"]]})
    sets = r.expand_keywords("t", [_d(1), _d(2)], prior=["a"])
    assert flatten_keywords(sets) == ["b", "c"]
    assert [(s.parent_doc_id, s.keywords) for s in sets] == [("1", ("b",)), ("2", ("c",))]


def test_expand_all_known_is_empty():
    r, _ = retriever({"depth_exp": lambda c: "a"})
    assert flatten_keywords(r.expand_keywords("t", [_d(1)], prior=["A"])) == []


def test_expand_skips_unparseable_doc():
    outs = {"doc 1": "Well, I could not decide on any good keyword for this one, sorry.", "doc 2": "x"}
    r, _ = retriever({"depth_exp": lambda c: outs[c.bindings["title"]]})
    assert flatten_keywords(r.expand_keywords("t", [_d(1), _d(2)])) == ["x"]


def test_expand_respects_caps():
    r, _ = retriever({"depth_exp": lambda c: ", ".join(f"{c.bindings['title']}-{i}" for i in range(9))},
                     per_doc_keywords=3, max_expanded_keywords=4)
    sets = r.expand_keywords("t", [_d(1), _d(2)])
    assert flatten_keywords(sets) == ["doc 1-0", "doc 1-1", "doc 1-2", "doc 2-0"]


# -- two-stage corpus construction ---------------------------------------------

ABCD = LocalCorpusSource([
    Document("A", "alpha one", "alpha text"),
    Document("B", "alpha two", "alpha and gamma text"),
    Document("C", "gamma three", "gamma text"),
    Document("D", "gamma four", "gamma noise"),
])


def abcd_handlers(relevant=("A", "B", "C"), expansion="gamma"):
    titles = {"alpha one": "A", "alpha two": "B", "gamma three": "C", "gamma four": "D"}
    return {
        "keyword_gen": lambda c: "KEYWORDS: alpha",
        "rel_filter": lambda c: "RELEVANT" if titles[c.bindings["title"]] in relevant else "IRRELEVANT",
        "depth_exp": lambda c: f"KEYWORDS: {expansion}",
    }


def test_build_corpus_hand_trace():
    r, chat = retriever(abcd_handlers(), source=ABCD)
    snap = r.build_corpus("topic")
    assert [d.doc_id for d in snap.documents] == ["A", "B", "C"]
    assert snap.stage1_ids == ["A", "B"] and snap.stage2_ids == ["C"]
    assert [d.retrieval_round for d in snap.documents] == [1, 1, 2]

    # independent walk of the transcript: keyword generation, filter on {A,B},
    # expansion per relevant doc, filter again only on the new {C,D}
    walk = [(c.template_id, c.bindings.get("title")) for c in chat.transcript]
    assert walk[0] == ("keyword_gen", None)
    assert sorted(t for tid, t in walk if tid == "rel_filter") == ["alpha one", "alpha two", "gamma four", "gamma three"]
    assert sorted(t for tid, t in walk if tid == "depth_exp") == ["alpha one", "alpha two"]
    assert len(walk) == 1 + 2 + 2 + 2
    assert [k.origin for k in snap.keyword_log] == ["initial", "expanded"]
    assert snap.keyword_log[1].parent_doc_id == "A"


def test_build_corpus_all_irrelevant():
    r, _ = retriever(abcd_handlers(relevant=()), source=ABCD)
    with pytest.raises(EmptyCorpus):
        r.build_corpus("topic")


def test_build_corpus_without_expansion():
    r, chat = retriever(abcd_handlers(expansion="alpha"), source=ABCD)
    snap = r.build_corpus("topic")
    assert [d.doc_id for d in snap.documents] == ["A", "B"] and snap.stage2_ids == []
    assert len(chat.calls_for("rel_filter")) == 2


def test_snapshot_round_trip(tmp_path):
    r, _ = retriever(abcd_handlers(), source=ABCD)
    snap = r.build_corpus("topic")
    snap.save(tmp_path)
    assert CorpusSnapshot.load(tmp_path) == snap


def test_snapshot_invariants():
    doc = Document("A", "t", "x", relevance="relevant", retrieval_round=1)
    with pytest.raises(ValueError):
        CorpusSnapshot("t", [doc], ["A"], ["A"])
    with pytest.raises(ValueError):
        CorpusSnapshot("t", [doc.replace(relevance="unjudged")], ["A"], [])
    with pytest.raises(ValueError):
        CorpusSnapshot("t", [doc], [], [])


def test_fixture_corpus_two_stages():
    src = LocalCorpusSource.from_jsonl(CORPUS)
    r = RelevanceExpandingRetriever(src, offline_gateway())
    snap = r.build_corpus(TOPIC)
    groups = sorted({d.doc_id.split(":")[1] for d in snap.documents})
    assert len(snap) == 9 and "music-wind" not in groups
    assert all(i.startswith("local:hydro") for i in snap.stage2_ids)
    assert len(snap.stage2_ids) == 3
