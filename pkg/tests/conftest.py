import numpy as np
import pytest

from shgnn.hetgraph import HeteroGraph, Schema
from shgnn.synth import g0


@pytest.fixture
def graph_g0():
    return g0()


def random_tri_graph(seed, n_max=50, p=None):
    """Random movie/actor/director graph with at most ``n_max`` nodes."""
    rng = np.random.default_rng(seed)
    n_m, n_a, n_d = rng.integers(2, n_max // 3 + 1, size=3)
    p = p if p is not None else rng.uniform(0.05, 0.4)
    schema = Schema(("M", "A", "D"), (("M", "A"), ("M", "D")), "M")
    ms = [f"m{i}" for i in range(n_m)]
    as_ = [f"a{i}" for i in range(n_a)]
    ds = [f"d{i}" for i in range(n_d)]
    edges = {
        ("M", "A"): [(m, a) for m in ms for a in as_ if rng.random() < p],
        ("M", "D"): [(m, d) for m in ms for d in ds if rng.random() < p],
    }
    feats = {"M": rng.uniform(-1, 1, size=(n_m, 4))}
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return HeteroGraph(schema, {"M": ms, "A": as_, "D": ds}, edges, {}, feats)


@pytest.fixture
def tri_graph():
    return random_tri_graph(3)


# acceptance lines collected by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
