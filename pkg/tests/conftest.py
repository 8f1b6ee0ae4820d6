import os
from pathlib import Path

import pytest

from shillkit.ratings import load_movielens

DATA = Path(__file__).parent / "data"
ML_DIR = Path(os.environ.get("SHILLKIT_ML100K", Path(__file__).parents[1] / "data" / "ml-100k"))

TOY_MATRICES = ["toy_4x5.tsv", "toy_10x8.tsv", "toy_attack.tsv", "toy_genres.tsv"]


@pytest.fixture
def toy_path():
    return lambda name: DATA / name


@pytest.fixture
def toy45():
    return load_movielens(DATA / "toy_4x5.tsv")


@pytest.fixture
def toy_attack():
    return load_movielens(DATA / "toy_attack.tsv", labels_path=DATA / "toy_attack_labels.txt")


@pytest.fixture
def toy_genres():
    return load_movielens(DATA / "toy_genres.tsv", DATA / "toy_genres.item")


def _require_movielens():
    if not (ML_DIR / "u.data").exists():
        pytest.skip(f"MovieLens 100K not found in {ML_DIR}; run scripts/fetch_movielens.py")


@pytest.fixture(scope="session")
def ml_paths():
    _require_movielens()
    return ML_DIR / "u.data", ML_DIR / "u.item"


@pytest.fixture(scope="session")
def ml100k(ml_paths):
    return load_movielens(*ml_paths)


# -- acceptance reporting -------------------------------------------------

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _criteria.setdefault(n, {"title": title, "passed": 0, "failed": 0, "skipped": 0})
    if rep.when == "call":
        entry["passed" if rep.passed else "failed"] += 1
    elif rep.when == "setup" and rep.skipped:
        entry["skipped"] += 1
    elif rep.when == "setup" and rep.failed:
        entry["failed"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        total = e["passed"] + e["failed"] + e["skipped"]
        if e["failed"]:
            status = "FAIL"
        elif e["skipped"]:
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(
            f"criterion {n}: {status}  {e['title']}  ({e['passed']}/{total} checks passed)")
