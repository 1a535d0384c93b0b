from pathlib import Path

import pytest

from framevqa.frames import load_frameset
from framevqa.realize import iter_annotations, load_splits
from framevqa.taxonomy import load_taxonomy

DATA = Path(__file__).parent / "data"

_criteria: list[tuple[int, str, str]] = []


def pytest_addoption(parser):
    parser.addoption("--imsitu", metavar="DIR", default=None,
                     help="directory with schema.json, annotations.jsonl, splits.jsonl of the real imSitu data")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.skipped):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _criteria.append((marker.args[0], marker.args[1], status))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, status in sorted(_criteria):
        terminalreporter.write_line(f"[{status}] criterion {n}: {title}")


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def sample_frames():
    return load_frameset(DATA / "sample_schema.json")


@pytest.fixture(scope="session")
def sample_annotations():
    return list(iter_annotations(DATA / "sample_annotations.jsonl"))


@pytest.fixture(scope="session")
def sample_splits():
    return load_splits(DATA / "sample_splits.jsonl")


@pytest.fixture(scope="session")
def toy_taxonomy():
    return load_taxonomy(DATA / "toy_edges.tsv", DATA / "toy_synonyms.tsv")
