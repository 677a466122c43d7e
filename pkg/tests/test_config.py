from pathlib import Path

import pytest

from convergewriter.config import (
    RunConfig,
    build_chat,
    build_embedder,
    build_gateway,
    build_reranker,
    build_source,
    interpolate,
    load_config,
)
from convergewriter.errors import ConfigError
from convergewriter.mock import HashEmbeddingProvider, OfflineChat
from convergewriter.providers import HTTPReranker, OpenAIChatProvider
from convergewriter.sources import LocalCorpusSource, WikipediaSource

from conftest import CORPUS


def test_interpolation():
    env = {"URL": "http://x", "EMPTY": ""}
    assert interpolate("${URL}/v1", env) == "http://x/v1"
    assert interpolate("${MISSING:-http://d}", env) == "http://d"
    assert interpolate("${EMPTY:-d}", env) == ""
    assert interpolate({"a": ["${URL}", 3]}, env) == {"a": ["http://x", 3]}
    with pytest.raises(ConfigError, match="MISSING"):
        interpolate("${MISSING}", env)


def write(tmp_path, text):
    path = tmp_path / "run.toml"
    path.write_text(text)
    return path


def test_load_toml_with_tables(tmp_path, monkeypatch):
    monkeypatch.setenv("CW_DIM", "32")
    path = write(tmp_path, """
topic = "Solar sails"
mode = "no-clustering"
out = "runs/a"
[clustering]
k_max = 5
parts = 4
[budgets]
leaf_budget = 120
[embedding]
kind = "hash"
dim = "${CW_DIM}"
[source]
kind = "local"
path = "data/corpus.jsonl"
""")
    cfg = load_config(path, seed=9, parts=None)
    assert (cfg.topic, cfg.mode, cfg.out_dir, cfg.seed) == ("Solar sails", "no_clustering", "runs/a", 9)
    assert (cfg.k_max, cfg.parts, cfg.leaf_budget) == (5, 4, 120)
    assert cfg.embedding["dim"] == "32"
    assert Path(cfg.source["path"]) == tmp_path.resolve() / "data" / "corpus.jsonl"


@pytest.mark.parametrize("text,match", [
    ('mode = "banana"', "mode"),
    ('mapping = "surjective"', "mapping"),
    ("max_context_tokens = 0", "max_context_tokens"),
    ("k_min = 5\nk_max = 3", "k_min"),
    ("k_min = 1", "at least 2"),
    ("top_m = 0", "top_m"),
    ("colour = 1", "unknown"),
    ("topic = ", "run.toml"),
])
def test_invalid_configs(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        load_config(write(tmp_path, text))


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/run.toml")


def test_round_trip_dict():
    cfg = RunConfig(topic="t", seed=4, top_m=3)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_factories(tmp_path):
    assert isinstance(build_chat({"kind": "offline"}), OfflineChat)
    chat = build_chat({"kind": "openai", "base_url": "http://h", "model": "m"})
    assert isinstance(chat, OpenAIChatProvider)
    with pytest.raises(ConfigError):
        build_chat({"kind": "openai"})
    with pytest.raises(ConfigError):
        build_chat({"kind": "telepathy"})
    assert build_embedder({"kind": "hash", "dim": 16}).dim == 16
    assert build_reranker({"kind": "embedding"}) is None
    assert isinstance(build_reranker({"kind": "http", "base_url": "http://h", "model": "r"}), HTTPReranker)

    src = build_source(RunConfig(topic="t", source={"kind": "local", "path": CORPUS.name}), CORPUS.parent)
    assert isinstance(src, LocalCorpusSource) and len(src) == 10
    with pytest.raises(ConfigError):
        build_source(RunConfig(topic="t", source={"kind": "local"}))
    with pytest.raises(ConfigError):
        build_source(RunConfig(topic="t", source={"kind": "local", "path": "missing.jsonl"}), tmp_path)
    wiki = build_source(RunConfig(topic="t", source={"kind": "wikipedia", "user_agent": "ua/1"}))
    assert isinstance(wiki, WikipediaSource)

    gw = build_gateway(RunConfig(topic="t", max_context_tokens=1234, judge={"kind": "offline", "rubric_score": 2}))
    assert gw.max_context_tokens == 1234 and isinstance(gw.embedder, HashEmbeddingProvider)
    assert gw.judge is not gw.chat and gw.judge.rubric_score == 2.0
