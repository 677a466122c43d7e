import logging
from pathlib import Path

import pytest

from convergewriter import Gateway, HashEmbeddingProvider, LocalCorpusSource, OfflineChat, RunConfig
from convergewriter.cache import DiskCache

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = FIXTURES / "energy_corpus.jsonl"
TOPIC = "Renewable electricity generation"
TOPIC_GROUPS = {"solar", "wind", "hydro"}


def offline_chat(**overrides) -> OfflineChat:
    settings = dict(
        keywords=["solar", "wind"],
        expansions={"Offshore wind power": ["hydroelectric"]},
        relevant_terms=["electricity", "energy", "power"],
    )
    settings.update(overrides)
    return OfflineChat(**settings)


def offline_gateway(chat=None, cache_dir=None, dim=512, **kwargs) -> Gateway:
    return Gateway(
        chat or offline_chat(),
        HashEmbeddingProvider(dim),
        cache=DiskCache(cache_dir) if cache_dir is not None else None,
        **kwargs,
    )


def group_of(doc_id: str) -> str:
    return doc_id.split(":", 1)[1].split("-", 1)[0]


@pytest.fixture
def corpus_source():
    return LocalCorpusSource.from_jsonl(CORPUS)


@pytest.fixture
def fixture_config():
    return RunConfig(topic=TOPIC, seed=3)


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.INFO, logger="convergewriter")


# -- acceptance reporting ------------------------------------------------------
# Tests marked ``@pytest.mark.criterion(n, "title")`` get one PASS/FAIL line
# each in the terminal summary, so the verdicts survive output capturing.

_CRITERIA: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and report.passed):
        return
    number, title = mark.args
    ok = report.passed and _CRITERIA.get(number, (title, True))[1]
    _CRITERIA[number] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}")
