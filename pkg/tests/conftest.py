import numpy as np
import pytest

from gegcn.graph import WeightedGraph


def random_connected_graph(rng, n, extra=None, wlow=0.5, whigh=3.0, features=0, classes=0):
    """Random spanning tree plus ``extra`` random chords, positive weights."""
    order = rng.permutation(n)
    edges = [(int(order[i]), int(order[rng.integers(0, i)])) for i in range(1, n)]
    extra = n if extra is None else extra
    for _ in range(extra):
        u, v = rng.choice(n, 2, replace=False)
        edges.append((int(u), int(v)))
    w = rng.uniform(wlow, whigh, len(edges))
    X = rng.standard_normal((n, features)) if features else None
    y = rng.integers(0, classes, n) if classes else None
    return WeightedGraph.from_edges(n, edges, w, X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def triangle():
    return WeightedGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


# ---- acceptance reporting: one PASS/FAIL line per criterion at the end of the run

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and not rep.failed:
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(getattr(call.excinfo, "value", ""))[:160]
    _CRITERIA[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        line = f"criterion {number} {status}: {title}"
        if detail:
            line += f" | {detail}"
        terminalreporter.write_line(line)
