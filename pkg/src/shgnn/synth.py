"""Small graphs for tests, demos and the built-in benchmark.

``planted_dataset`` builds the benchmark whose labels can only be read off
how meta-path neighbors are grouped under shared intermediate nodes.  Every
labeled movie has the same neighbor multiset (itself three times plus three
red, three green and three blue filler movies), the same degree and the same
coverage counts; classes differ only in how the nine fillers are split
among the movie's three private actors:

* class 0: ``RRR | GGG | BBB``
* class 1: ``RGB | RGB | RGB``
* class 2: ``RRG | GGB | BBR``

Aggregating directly from the end nodes of each instance sees identical
inputs for all three classes.
"""
from __future__ import annotations

import numpy as np

from .hetgraph import Dataset, HeteroGraph, Schema, natural_key

GROUPINGS = (
    ((0, 0, 0), (1, 1, 1), (2, 2, 2)),
    ((0, 1, 2), (0, 1, 2), (0, 1, 2)),
    ((0, 0, 1), (1, 1, 2), (2, 2, 0)),
)


def g0():
    """Two movies sharing one actor; m1 = (1, 0), m2 = (0, 1)."""
    schema = Schema(("M", "A"), (("M", "A"),), "M", num_classes=2)
    nodes = {"M": ["m1", "m2"], "A": ["a1"]}
    edges = {("M", "A"): [("m1", "a1"), ("m2", "a1")]}
    feats = {"M": np.array([[1.0, 0.0], [0.0, 1.0]])}
    return HeteroGraph(schema, nodes, edges, {"m1": 0, "m2": 1}, feats)


def shared_actor_graph():
    """m1 and m2 share actor a1 with movie mi; m3 reaches mi through a2."""
    schema = Schema(("M", "A"), (("M", "A"),), "M", num_classes=2)
    nodes = {"M": ["m1", "m2", "m3", "mi"], "A": ["a1", "a2"]}
    edges = {("M", "A"): [("m1", "a1"), ("m2", "a1"), ("mi", "a1"), ("m3", "a2"), ("mi", "a2")]}
    feats = {"M": np.eye(4)}
    return HeteroGraph(schema, nodes, edges, {}, feats)


def _split(rng, nodes, labels, fractions):
    """Stratified train/validation/test split of ``nodes``."""
    out = {"train": [], "validation": [], "test": []}
    for c in np.unique(labels):
        members = rng.permutation(nodes[labels == c])
        n = len(members)
        a = int(round(fractions[0] * n))
        b = a + int(round(fractions[1] * n))
        out["train"] += list(members[:a])
        out["validation"] += list(members[a:b])
        out["test"] += list(members[b:])
    return {k: np.sort(np.asarray(v, dtype=np.int64)) for k, v in out.items()}


def random_hetero_graph(seed, n_m=12, n_a=10, n_d=8, p_ma=0.25, p_md=0.2, dim=5,
                        num_classes=3, fractions=(0.4, 0.3)):
    """Random movie/actor/director graph with dense random movie features."""
    rng = np.random.default_rng(seed)
    schema = Schema(("M", "A", "D"), (("M", "A"), ("M", "D")), "M", num_classes=num_classes)
    ms = [f"m{i}" for i in range(n_m)]
    as_ = [f"a{i}" for i in range(n_a)]
    ds = [f"d{i}" for i in range(n_d)]
    edges = {
        ("M", "A"): [(m, a) for m in ms for a in as_ if rng.random() < p_ma],
        ("M", "D"): [(m, d) for m in ms for d in ds if rng.random() < p_md],
    }
    feats = {"M": rng.uniform(-1.0, 1.0, size=(n_m, dim))}
    y = rng.integers(0, num_classes, size=n_m)
    labels = {m: int(c) for m, c in zip(ms, y)}
    g = HeteroGraph(schema, {"M": ms, "A": as_, "D": ds}, edges, labels, feats)
    splits = _split(rng, g.labeled_nodes(), g.labels[g.labeled_nodes()], fractions)
    return Dataset(g, splits)


def planted_dataset(seed=0, per_class=20, noise=0.05, fractions=(1 / 3, 1 / 3)):
    """The 3-class grouping benchmark described in the module docstring.

    ``per_class`` labeled movies per class (60 by default).  Filler features
    are one-hot colors plus ``noise``-scaled Gaussian jitter; labeled movies
    carry a separate marker dimension.  Node names are shuffled so ids carry
    no class information.
    """
    rng = np.random.default_rng(seed)
    n_targets = 3 * per_class
    tnames = [f"m{i}" for i in rng.permutation(n_targets)]
    classes = np.repeat(np.arange(3), per_class)
    movies, feats, labels, edges = [], [], {}, []
    fid = aid = 0
    dim = 4
    for name, c in zip(tnames, classes):
        movies.append(name)
        feats.append(np.eye(dim)[0] + noise * rng.standard_normal(dim))
        labels[name] = int(c)
        # random colour relabelling keeps every class colour-symmetric on average
        perm = rng.permutation(3)
        for group in GROUPINGS[c]:
            actor = f"a{aid}"
            aid += 1
            edges.append((name, actor))
            for colour in group:
                fname = f"f{fid}"
                fid += 1
                movies.append(fname)
                feats.append(np.eye(dim)[1 + perm[colour]] + noise * rng.standard_normal(dim))
                edges.append((fname, actor))
    schema = Schema(("M", "A"), (("M", "A"),), "M", num_classes=3)
    order = sorted(range(len(movies)), key=lambda i: natural_key(movies[i]))
    x = np.array([feats[i] for i in order])
    g = HeteroGraph(schema, {"M": movies, "A": [f"a{i}" for i in range(aid)]},
                    {("M", "A"): edges}, labels, {"M": x})
    lab = g.labeled_nodes()
    splits = _split(rng, lab, g.labels[lab], fractions)
    return Dataset(g, splits)

