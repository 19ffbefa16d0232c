import numpy as np
import pytest

from graphonlab.core import Kernel, Partition, StepGraphon, merge_breaks

_criteria = {}


def random_graphon(rng, k=None, equal=False):
    k = int(rng.integers(1, 7)) if k is None else k
    m = np.full(k, 1.0 / k) if equal else rng.dirichlet(np.ones(k)) * 0.9 + 0.1 / k
    V = rng.random((k, k))
    return StepGraphon(m / m.sum(), np.triu(V) + np.triu(V, 1).T)


def random_kernel(rng, k=None):
    k = int(rng.integers(1, 9)) if k is None else k
    m = rng.dirichlet(np.ones(k)) * 0.9 + 0.1 / k
    V = rng.uniform(-1, 1, (k, k))
    return Kernel(m / m.sum(), np.triu(V) + np.triu(V, 1).T)


def random_partition(rng, breaks, parts=None):
    """Random partition whose parts are unions of cells of ``breaks``."""
    n = len(breaks) - 1
    parts = int(rng.integers(1, n + 1)) if parts is None else min(parts, n)
    labels = np.concatenate([np.arange(parts), rng.integers(0, parts, n - parts)])
    rng.shuffle(labels)
    return Partition(breaks, labels)


def random_interval_grid(rng, n):
    return merge_breaks(np.sort(rng.random(n - 1)))


@pytest.fixture
def bipartite():
    return StepGraphon.from_matrix([[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture
def half():
    return StepGraphon.constant(0.5)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not mark.args:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _criteria[mark.args[0]] = (item.name, rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        name, outcome = _criteria[num]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {status}  ({name})")
