"""Command line: ``convergewriter {run,resume,eval,inspect}``.

Exit codes: 0 success, 2 config error, 3 stage failure, 4 corrupt manifest.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

from .config import build_gateway, load_config
from .errors import ConfigError, ConvergeWriterError, CorruptManifest, StageFailure
from .evaluator import DIMENSIONS, evaluate
from .pipeline import inspect_run, resume, run_pipeline
from .sources import Document, LocalCorpusSource, read_jsonl

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_CORRUPT = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="convergewriter", description="Bottom-up retrieval-augmented article writer.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-v info, -vv debug)")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the whole pipeline for one topic")
    run.add_argument("--topic", required=True)
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--mode", choices=["full", "no-clustering"])
    run.add_argument("--seed", type=int)
    run.add_argument("--out", type=Path)
    run.add_argument("--parts", type=int, help="number of sequential parts in no-clustering mode")

    res = sub.add_parser("resume", help="continue an interrupted or edited run")
    res.add_argument("--out", required=True, type=Path)
    res.add_argument("--force", action="store_true", help="adopt hand-edited artifacts and re-run downstream")

    ev = sub.add_parser("eval", help="score an existing Markdown article against a corpus")
    ev.add_argument("--article", required=True, type=Path)
    ev.add_argument("--corpus", required=True, type=Path, help="JSON Lines corpus")
    ev.add_argument("--config", required=True, type=Path)
    ev.add_argument("--topic", help="defaults to the article's first-level heading")
    ev.add_argument("--report", type=Path, help="write the JSON report here instead of stdout")

    ins = sub.add_parser("inspect", help="print a summary of a run directory")
    ins.add_argument("--out", required=True, type=Path)
    return p


def load_corpus_documents(path: Path) -> list[Document]:
    """Accept either pipeline snapshots (``doc_id`` rows) or plain ``{id,title,text}`` corpora."""
    rows = read_jsonl(path)
    if rows and all("doc_id" in r for r in rows):
        return [Document.from_dict(r) for r in rows]
    return list(LocalCorpusSource.from_records(rows).documents)


def _cmd_run(args) -> int:
    mode = args.mode.replace("-", "_") if args.mode else None
    config = load_config(args.config, topic=args.topic, mode=mode, seed=args.seed,
                         out_dir=str(args.out) if args.out else None, parts=args.parts)
    manifest = run_pipeline(config)
    print(f"run complete: {config.out_dir} ({sum(r.done for r in manifest.stages.values())} stages)")
    return EXIT_OK


def _cmd_resume(args) -> int:
    manifest = resume(args.out, force=args.force)
    print(f"run complete: {args.out} ({sum(r.done for r in manifest.stages.values())} stages)")
    return EXIT_OK


def _cmd_eval(args) -> int:
    config = load_config(args.config)
    try:
        markdown = args.article.read_text(encoding="utf-8")
        documents = load_corpus_documents(args.corpus)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    topic = args.topic or config.topic
    if not topic:
        m = re.search(r"^#\s+(.+)$", markdown, re.M)
        topic = m.group(1).strip() if m else ""
    if not topic:
        raise ConfigError("no topic: pass --topic or give the article a '# title'")
    gateway = build_gateway(config)
    report = evaluate(topic, markdown, documents, gateway, {**DIMENSIONS, **config.rubric}, config.concurrency)
    if args.report:
        args.report.parent.mkdir(parents=True, exist_ok=True)
        args.report.write_text(report.to_json(), encoding="utf-8")
    else:
        print(report.to_json())
    return EXIT_OK


def _cmd_inspect(args) -> int:
    print(inspect_run(args.out))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "resume": _cmd_resume, "eval": _cmd_eval, "inspect": _cmd_inspect}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageFailure as exc:
        print(f"stage failed: {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_STAGE
    except CorruptManifest as exc:
        print(f"corrupt manifest: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except ConvergeWriterError as exc:
        # errors outside a stage (e.g. eval with an unreachable judge)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
