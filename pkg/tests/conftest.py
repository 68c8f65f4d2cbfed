import numpy as np
import pytest

from hetembed.graph import GraphSchema, HetGraph
from hetembed.textenc import WordTable


def small_academic_graph():
    """Ten nodes, three types: four authors, four papers, two venues."""
    g = HetGraph(GraphSchema.academic())
    for a in ("A1", "A2", "A3", "A4"):
        g.add_node(a, "author")
    texts = {
        "P1": "graph mining on large networks",
        "P2": "network embedding with random walks",
        "P3": "deep text encoders for papers",
        "P4": "mining author networks",
    }
    for p, text in texts.items():
        g.add_node(p, "paper", text)
    for v in ("V1", "V3"):
        g.add_node(v, "venue")
    for a, p in [("A1", "P1"), ("A1", "P2"), ("A3", "P2"), ("A2", "P3"), ("A3", "P4"), ("A4", "P4")]:
        g.add_edge(a, p, "write")
    for p, v in [("P1", "V1"), ("P2", "V1"), ("P3", "V3"), ("P4", "V1")]:
        g.add_edge(p, v, "publish")
    g.add_edge("P2", "P1", "cite")
    g.add_edge("P4", "P3", "cite")
    return g


def grown_academic_graph():
    """The small graph plus new author A5 writing new paper P5 (with A1, A4) at venue V3."""
    g = small_academic_graph()
    g.add_node("A5", "author")
    g.add_node("P5", "paper", "random walks on author networks")
    for a in ("A5", "A1", "A4"):
        g.add_edge(a, "P5", "write")
    g.add_edge("P5", "V3", "publish")
    g.add_edge("P5", "P2", "cite")
    g.add_edge("P5", "P3", "cite")
    return g


def toy_words(dim=6, seed=0):
    rng = np.random.default_rng(seed)
    vocab = sorted(
        {
            w
            for t in (
                "graph mining on large networks",
                "network embedding with random walks",
                "deep text encoders for papers",
                "mining author networks",
            )
            for w in t.split()
        }
    )
    return WordTable(vocab, rng.normal(size=(len(vocab), dim)))


@pytest.fixture
def small_graph():
    return small_academic_graph()


@pytest.fixture
def grown_graph():
    return grown_academic_graph()


@pytest.fixture
def words():
    return toy_words()


def rel_error(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)


def central_difference(f, x, eps=1e-5):
    """Numerical gradient of scalar ``f`` with respect to array ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        hi = f()
        x[i] = old - eps
        lo = f()
        x[i] = old
        grad[i] = (hi - lo) / (2 * eps)
    return grad


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
