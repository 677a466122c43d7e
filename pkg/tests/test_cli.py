import json
import shutil

import pytest

from convergewriter.cli import main

from conftest import CORPUS, TOPIC

CONFIG = """
seed = 3
[chat]
kind = "offline"
keywords = ["solar", "wind"]
relevant_terms = {relevant}
[chat.expansions]
"Offshore wind power" = ["hydroelectric"]
[embedding]
kind = "hash"
dim = 512
[source]
kind = "local"
path = "data/corpus.jsonl"
"""


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    (tmp_path / "cfg" / "data").mkdir(parents=True)
    shutil.copy(CORPUS, tmp_path / "cfg" / "data" / "corpus.jsonl")
    (tmp_path / "elsewhere").mkdir()
    monkeypatch.chdir(tmp_path / "elsewhere")
    return tmp_path


def config(workspace, relevant='["electricity", "energy", "power"]', name="run.toml"):
    path = workspace / "cfg" / name
    path.write_text(CONFIG.format(relevant=relevant))
    return path


def test_run_inspect_resume(workspace, capsys):
    out = workspace / "out"
    assert main(["run", "--topic", TOPIC, "--config", str(config(workspace)), "--out", str(out)]) == 0
    assert (out / "article_final.md").is_file()
    assert "run complete" in capsys.readouterr().out

    assert main(["inspect", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "eval       done" in text and "coverage:" in text

    assert main(["resume", "--out", str(out)]) == 0


def test_relative_corpus_path_survives_resume_from_other_cwd(workspace, monkeypatch):
    out = workspace / "out"
    cfg = config(workspace)
    assert main(["run", "--topic", TOPIC, "--config", str(cfg), "--out", str(out)]) == 0
    before = (out / "corpus" / "documents.jsonl").read_bytes()
    (out / "corpus" / "documents.jsonl").unlink()
    monkeypatch.chdir(workspace)
    assert main(["resume", "--out", str(out), "--force"]) == 0
    assert (out / "corpus" / "documents.jsonl").read_bytes() == before


def test_config_error_exit_2(workspace, capsys):
    bad = workspace / "cfg" / "bad.toml"
    bad.write_text('mode = "banana"\n')
    assert main(["run", "--topic", TOPIC, "--config", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["run", "--topic", TOPIC, "--config", str(workspace / "nope.toml")]) == 2


def test_stage_failure_exit_3(workspace, capsys):
    cfg = config(workspace, relevant='["zzz-not-present"]')
    assert main(["run", "--topic", TOPIC, "--config", str(cfg), "--out", str(workspace / "out")]) == 3
    assert "stage failed: corpus" in capsys.readouterr().err


def test_corrupt_manifest_exit_4(workspace, capsys):
    assert main(["resume", "--out", str(workspace / "empty")]) == 4
    out = workspace / "out"
    main(["run", "--topic", TOPIC, "--config", str(config(workspace)), "--out", str(out)])
    outline = (out / "outline.md").read_text()
    (out / "outline.md").write_text(outline.replace("## Conclusion", "## Wrapping up by hand"))
    assert main(["resume", "--out", str(out)]) == 4
    assert "corrupt manifest" in capsys.readouterr().err
    # forced adoption of a broken outline fails downstream, naming the stage
    assert main(["resume", "--out", str(out), "--force"]) == 3
    assert "stage failed: sections" in capsys.readouterr().err

    (out / "outline.md").write_text(outline.replace("## Conclusion", "## Conclusion and outlook"))
    assert main(["resume", "--out", str(out), "--force"]) == 0
    assert "## Conclusion and outlook" in (out / "article_final.md").read_text()


def test_eval_subcommand(workspace, capsys):
    out = workspace / "out"
    cfg = config(workspace)
    main(["run", "--topic", TOPIC, "--config", str(cfg), "--out", str(out)])
    capsys.readouterr()
    report = workspace / "report.json"
    assert main(["eval", "--article", str(out / "article_final.md"), "--corpus",
                 str(out / "corpus" / "documents.jsonl"), "--config", str(cfg), "--report", str(report)]) == 0
    data = json.loads(report.read_text())
    pipeline_report = json.loads((out / "eval" / "report.json").read_text())
    assert data["coverage_percent"] == pipeline_report["coverage_percent"]
    assert data["word_length"] == pipeline_report["word_length"]

    # an external article scored against a plain {id,title,text} corpus, report to stdout
    article = workspace / "other.md"
    article.write_text("# Hydro\n\n" + json.loads(CORPUS.read_text().splitlines()[6])["text"] + "\n")
    assert main(["eval", "--article", str(article), "--corpus", str(CORPUS), "--config", str(cfg)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["coverage_percent"] == 100.0 and printed["judgments"][0]["top_doc_ids"][0] == "local:hydro-dams"


def test_eval_missing_article_exit_2(workspace):
    cfg = config(workspace)
    assert main(["eval", "--article", "missing.md", "--corpus", str(CORPUS), "--config", str(cfg)]) == 2
