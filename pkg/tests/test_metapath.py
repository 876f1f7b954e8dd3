import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shgnn.hetgraph import HeteroGraph, Schema
from shgnn.metapath import (MetaPath, build_forest, build_tree, enumerate_instances,
                            metapath_neighbors, neighbor_counts_via_matrices,
                            tree_from_instances)
from shgnn.synth import shared_actor_graph

from conftest import random_tri_graph
from oracles import brute_instances

TRI_PATHS = ["M-A-M", "M-D-M", "A-M-A", "D-M-D", "A-M-D", "M-A-M-D-M"]


def names(g, seq):
    return [g.node_names[v] for v in seq]


def test_metapath_parse():
    p = MetaPath.parse("M-A-M")
    assert p.types == ("M", "A", "M") and p.symmetric and p.name == "M-A-M"
    assert not MetaPath.parse("A-M-D").symmetric
    with pytest.raises(ValueError):
        MetaPath(("M",))


def test_validate_against_schema(graph_g0):
    with pytest.raises(ValueError, match="no edge type"):
        MetaPath.parse("M-M").validate(graph_g0.schema)


def test_g0_instances(graph_g0):
    g = graph_g0
    m2 = g.index["m2"]
    got = [names(g, i) for i in enumerate_instances(g, "M-A-M", m2)]
    assert got == [["m1", "a1", "m2"], ["m2", "a1", "m2"]]
    # adjacency-product oracle: column m2 holds 1 instance from each start
    counts = (g.biadjacency("M", "A") @ g.biadjacency("A", "M")).toarray()
    assert counts[:, 1].tolist() == [1.0, 1.0]


def test_target_type_mismatch(graph_g0):
    with pytest.raises(ValueError, match="type"):
        enumerate_instances(graph_g0, "M-A-M", graph_g0.index["a1"])


def test_target_without_edges():
    s = Schema(("M", "A"), (("M", "A"),), "M")
    g = HeteroGraph(s, {"M": ["m1", "m2"], "A": ["a1"]}, {("M", "A"): [("m1", "a1")]})
    assert enumerate_instances(g, "M-A-M", g.index["m2"]) == []
    assert metapath_neighbors(g, "M-A-M", g.index["m2"]) == []
    tree = build_tree(g, "M-A-M", g.index["m2"])
    assert [len(x) for x in tree.node_ids] == [1, 0, 0]


def test_g0_neighbors_and_tree(graph_g0):
    g = graph_g0
    m2 = g.index["m2"]
    assert names(g, metapath_neighbors(g, "M-A-M", m2)) == ["m1", "m2"]
    tree = build_tree(g, "M-A-M", m2)
    assert names(g, tree.node_ids[0]) == ["m2"]
    assert names(g, tree.node_ids[1]) == ["a1"]
    assert names(g, tree.node_ids[2]) == ["m1", "m2"]
    assert tree.leaf_counts().tolist() == [2]


def test_chain_neighbors_count_self_per_actor():
    # m1 -a1- m2 -a2- m3
    s = Schema(("M", "A"), (("M", "A"),), "M")
    g = HeteroGraph(s, {"M": ["m1", "m2", "m3"], "A": ["a1", "a2"]},
                    {("M", "A"): [("m1", "a1"), ("m2", "a1"), ("m2", "a2"), ("m3", "a2")]})
    nb = names(g, metapath_neighbors(g, "M-A-M", g.index["m2"]))
    assert {"m1", "m3"} <= set(nb)
    assert nb.count("m2") == 2  # once through each actor


def test_shared_intermediate_tree():
    g = shared_actor_graph()
    tree = build_tree(g, "M-A-M", g.index["mi"])
    assert names(g, tree.node_ids[1]) == ["a1", "a2"]
    a1_kids = tree.children(1, 0)
    a2_kids = tree.children(1, 1)
    assert names(g, tree.node_ids[2][a1_kids]) == ["m1", "m2", "mi"]
    assert names(g, tree.node_ids[2][a2_kids]) == ["m3", "mi"]


def test_tree_from_instances_merge_vs_isolated():
    g = shared_actor_graph()
    ix = g.index
    inst = [(ix["m1"], ix["a1"], ix["mi"]), (ix["m2"], ix["a1"], ix["mi"]),
            (ix["m3"], ix["a2"], ix["mi"])]
    merged = tree_from_instances("M-A-M", inst)
    assert [len(x) for x in merged.node_ids] == [1, 2, 3]
    isolated = tree_from_instances("M-A-M", inst, merge=False)
    assert [len(x) for x in isolated.node_ids] == [1, 3, 3]
    assert sorted(merged.instances()) == sorted(isolated.instances()) == sorted(inst)


def test_matrix_counts_g0(graph_g0):
    m = neighbor_counts_via_matrices(graph_g0, "M-A-M").toarray()
    assert m.tolist() == [[1, 1], [1, 1]]


def test_matrix_counts_edgeless():
    s = Schema(("M", "A"), (("M", "A"),), "M")
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = HeteroGraph(s, {"M": ["m1", "m2"], "A": ["a1"]}, {})
    assert neighbor_counts_via_matrices(g, "M-A-M").nnz == 0


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("path", TRI_PATHS)
def test_enumeration_agrees_with_oracles(seed, path):
    g = random_tri_graph(seed, n_max=18)
    p = MetaPath.parse(path)
    counts = neighbor_counts_via_matrices(g, p).toarray()
    brute = brute_instances(g, p)
    s0, e0 = g.type_offsets[p.start][0], g.type_offsets[p.end][0]
    all_inst = []
    for t in g.nodes_of_type(p.end):
        inst = enumerate_instances(g, p, t)
        all_inst += inst
        tree = build_tree(g, p, t)
        assert tree.leaf_counts()[0] == len(inst)
        assert sorted(tree.instances()) == sorted(inst)
        per_start = np.bincount([i[0] - s0 for i in inst], minlength=counts.shape[0])
        assert per_start.tolist() == counts[:, t - e0].astype(int).tolist()
    assert sorted(all_inst) == sorted(brute)


@pytest.mark.parametrize("seed", range(5))
def test_forest_matches_single_trees(seed):
    g = random_tri_graph(seed)
    targets = g.nodes_of_type("M")
    forest = build_forest(g, "M-A-M-D-M", targets)
    singles = forest.split()
    for t, tree in zip(targets, singles):
        ref = build_tree(g, "M-A-M-D-M", t)
        for a, b in zip(tree.node_ids, ref.node_ids):
            assert np.array_equal(a, b)


def test_trie_property_and_order(tri_graph):
    g = tri_graph
    for t in g.nodes_of_type("M"):
        tree = build_tree(g, "M-A-M-D-M", t)
        for k in range(tree.depth):
            for i in range(tree.level_size(k)):
                kids = tree.node_ids[k + 1][tree.children(k, i)]
                assert len(set(kids.tolist())) == len(kids)
                assert list(kids) == sorted(kids)


def test_symmetric_path_gives_symmetric_counts(tri_graph):
    m = neighbor_counts_via_matrices(tri_graph, "M-A-M-A-M").toarray()
    assert np.array_equal(m, m.T)


def test_instance_cap(tri_graph):
    g = tri_graph
    t = max(g.nodes_of_type("M"), key=lambda v: len(enumerate_instances(g, "M-A-M-D-M", v)))
    full = enumerate_instances(g, "M-A-M-D-M", t)
    assert len(full) > 3
    capped = enumerate_instances(g, "M-A-M-D-M", t, cap=3)
    assert capped == full[:3]
    tree = build_tree(g, "M-A-M-D-M", t, cap=3)
    assert tree.instances() == capped


def test_flattened_tree(graph_g0):
    g = graph_g0
    flat = build_tree(g, "M-A-M", g.index["m2"]).flattened()
    assert flat.depth == 1
    assert names(g, flat.node_ids[1]) == ["m1", "m2"]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(TRI_PATHS))
def test_leaf_counts_equal_column_sums(seed, path):
    g = random_tri_graph(seed, n_max=30)
    p = MetaPath.parse(path)
    targets = g.nodes_of_type(p.end)
    forest = build_forest(g, p, targets)
    colsum = np.asarray(neighbor_counts_via_matrices(g, p).sum(axis=0)).ravel()
    assert forest.leaf_counts().tolist() == colsum.astype(int).tolist()
