"""Meta-paths, their instances, and the prefix-merged aggregation trees.

An instance of a meta-path ``A1-...-Ak`` is an ordered node sequence whose
i-th node has type ``Ai`` and whose consecutive nodes are adjacent.  Nodes may
repeat (``m1-a1-m1`` is an instance of M-A-M), so instance counts agree with
products of biadjacency matrices.

Trees are stored level by level.  ``node_ids[k]`` holds the graph node of every
tree node at depth ``k`` and ``parents[k]`` the index of its parent at depth
``k - 1``.  Levels are kept in depth-first (lexicographic) order, which makes
the children of a node a contiguous, id-sorted run.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class MetaPath:
    types: tuple

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(self.types))
        if len(self.types) < 2:
            raise ValueError(f"a meta-path needs at least two node types, got {self.types}")

    @classmethod
    def parse(cls, text):
        if isinstance(text, MetaPath):
            return text
        if isinstance(text, str):
            return cls(tuple(t.strip() for t in text.split("-")))
        return cls(tuple(text))

    @property
    def name(self):
        return "-".join(self.types)

    @property
    def symmetric(self):
        return self.types == self.types[::-1]

    @property
    def start(self):
        return self.types[0]

    @property
    def end(self):
        return self.types[-1]

    def __len__(self):
        return len(self.types)

    def __str__(self):
        return self.name

    def validate(self, schema):
        for a, b in zip(self.types, self.types[1:]):
            if not schema.has_edge_type(a, b):
                raise ValueError(f"meta-path {self.name}: no edge type {a}-{b} in schema")
        return self


def _check_target(g, p, target):
    if g.type_of(target) != p.end:
        raise ValueError(
            f"target {g.node_names[target]} has type {g.type_of(target)}, "
            f"meta-path {p.name} ends in {p.end}"
        )


def enumerate_instances(g, p, target, cap=None):
    """All instances of ``p`` ending at ``target``, in depth-first order.

    Expansion runs backward from the target with neighbors visited in id
    order.  Each instance is a tuple of global node ids in meta-path order.
    ``cap`` keeps only the first ``cap`` instances.
    """
    p = MetaPath.parse(p)
    _check_target(g, p, target)
    out = []
    stack_types = p.types[::-1]

    def dfs(path):
        if cap is not None and len(out) >= cap:
            return
        depth = len(path) - 1
        if depth == len(stack_types) - 1:
            out.append(tuple(reversed(path)))
            return
        for u in g.neighbors_of_type(path[-1], stack_types[depth + 1]):
            path.append(int(u))
            dfs(path)
            path.pop()

    dfs([int(target)])
    return out


def metapath_neighbors(g, p, v, cap=None):
    """Start nodes of the instances ending at ``v``, one entry per instance, sorted."""
    return sorted(inst[0] for inst in enumerate_instances(g, p, v, cap))


def neighbor_counts_via_matrices(g, p):
    """Instance counts between every start/end pair as a sparse integer matrix."""
    p = MetaPath.parse(p)
    m = sp.identity(g.num_nodes_of(p.start), dtype=np.int64, format="csr")
    for a, b in zip(p.types, p.types[1:]):
        m = m @ g.biadjacency(a, b).astype(np.int64)
    return sp.csr_matrix(m)


@dataclass
class AggregationTree:
    """Level-wise trie of meta-path instances; one or several roots.

    A single-root tree is what the aggregator walks for one target.  Trees for
    many targets of the same meta-path are held together as one multi-root
    object so they can be processed level by level.
    """

    metapath: MetaPath
    node_ids: list
    parents: list

    @property
    def depth(self):
        return len(self.node_ids) - 1

    @property
    def roots(self):
        return self.node_ids[0]

    @property
    def target(self):
        if len(self.roots) != 1:
            raise ValueError("tree has several roots")
        return int(self.roots[0])

    def level_size(self, k):
        return len(self.node_ids[k])

    def children(self, k, i):
        """Indices at depth ``k + 1`` of the children of node ``i`` at depth ``k``."""
        if k >= self.depth:
            return np.empty(0, dtype=np.int64)
        par = self.parents[k + 1]
        lo, hi = np.searchsorted(par, i, "left"), np.searchsorted(par, i, "right")
        return np.arange(lo, hi)

    def child_counts(self, k):
        if k >= self.depth:
            return np.zeros(self.level_size(k), dtype=np.int64)
        return np.bincount(self.parents[k + 1], minlength=self.level_size(k))

    def subtree_leaf_counts(self):
        """Per level, the number of leaves under each tree node."""
        counts = [None] * (self.depth + 1)
        counts[-1] = np.ones(self.level_size(self.depth), dtype=np.int64)
        for k in range(self.depth, 0, -1):
            counts[k - 1] = np.bincount(
                self.parents[k], weights=counts[k], minlength=self.level_size(k - 1)
            ).astype(np.int64)
        return counts

    def leaf_counts(self):
        """Number of leaves (= instances) under each root."""
        return self.subtree_leaf_counts()[0]

    def paths(self):
        """Root-to-leaf node sequences, in leaf order."""
        n = self.level_size(self.depth)
        cols = [None] * (self.depth + 1)
        idx = np.arange(n)
        for k in range(self.depth, -1, -1):
            cols[k] = self.node_ids[k][idx]
            if k:
                idx = self.parents[k][idx]
        return np.stack(cols, axis=1) if n else np.empty((0, self.depth + 1), dtype=np.int64)

    def instances(self):
        """Leaves as meta-path instances (reversed root-to-leaf paths)."""
        return [tuple(int(x) for x in row[::-1]) for row in self.paths()]

    def split(self):
        """One single-root tree per root."""
        return [self.select_roots([i]) for i in range(len(self.roots))]

    def select_roots(self, which):
        keep = np.zeros(len(self.roots), dtype=bool)
        keep[list(which)] = True
        return _compact(self.metapath, self.node_ids, self.parents, [keep] + [None] * self.depth)

    def flattened(self):
        """Depth-1 version: every leaf hangs directly off its root.

        This is the aggregation used when tree attention is switched off:
        only the two end nodes of each instance meet.
        """
        leaf_root = np.arange(self.level_size(self.depth))
        for k in range(self.depth, 0, -1):
            leaf_root = self.parents[k][leaf_root]
        if self.depth == 0:
            leaf_root = np.empty(0, dtype=np.int64)
            leaves = np.empty(0, dtype=np.int64)
        else:
            leaves = self.node_ids[self.depth]
        return AggregationTree(self.metapath, [self.roots, leaves], [None, leaf_root])


def _compact(p, node_ids, parents, keep):
    """Drop nodes whose mask is False (or whose parent was dropped) and reindex."""
    depth = len(node_ids) - 1
    new_ids, new_par = [], []
    remap = None
    for k in range(depth + 1):
        mask = np.ones(len(node_ids[k]), dtype=bool) if keep[k] is None else keep[k].copy()
        if k:
            mask &= remap[parents[k]] >= 0
        idx = np.flatnonzero(mask)
        new_ids.append(node_ids[k][idx])
        new_par.append(None if k == 0 else remap[parents[k][idx]])
        remap = np.full(len(node_ids[k]), -1, dtype=np.int64)
        remap[idx] = np.arange(len(idx))
    # a node that lost all its descendants is no longer part of any instance
    for k in range(depth - 1, 0, -1):
        has_child = np.bincount(new_par[k + 1], minlength=len(new_ids[k])) > 0
        if not has_child.all():
            keep_k = [None] * (depth + 1)
            keep_k[k] = has_child
            return _compact(p, new_ids, new_par, keep_k)
    return AggregationTree(p, new_ids, new_par)


def _gather_neighbors(adj, local):
    """Flattened CSR neighbor lists of ``local`` rows plus the owning row index."""
    starts, stops = adj.indptr[local], adj.indptr[local + 1]
    counts = stops - starts
    owner = np.repeat(np.arange(len(local)), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    return adj.indices[np.repeat(starts, counts) + offs].astype(np.int64), owner


def build_forest(g, p, targets, cap=None):
    """Trie of instances of ``p`` for each target in ``targets`` (one root each).

    Dead-end branches (prefixes that cannot be completed into an instance) are
    never materialised.  With ``cap`` only the first ``cap`` instances of each
    root in depth-first order are kept.
    """
    p = MetaPath.parse(p)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    for t in targets:
        _check_target(g, p, t)
    rtypes = p.types[::-1]
    d = len(rtypes) - 1

    # number of leaves reachable below a node of the type at each depth
    below = [None] * (d + 1)
    below[d] = np.ones(g.num_nodes_of(rtypes[d]), dtype=np.float64)
    for k in range(d - 1, -1, -1):
        below[k] = g.biadjacency(rtypes[k], rtypes[k + 1]) @ below[k + 1]

    node_ids = [targets.copy()]
    parents = [None]
    root_of = np.arange(len(targets))
    before = np.zeros(len(targets))  # leaves preceding this node within its root
    local = targets - g.type_offsets[rtypes[0]][0]
    for k in range(1, d + 1):
        adj = g.biadjacency(rtypes[k - 1], rtypes[k])
        child, owner = _gather_neighbors(adj, local)
        w = below[k][child]
        # leaves before each child = leaves before its parent + earlier siblings
        csum = np.cumsum(w) - w
        first = np.searchsorted(owner, np.arange(len(local)), "left")
        sib_before = csum - csum[first[owner]] if len(child) else csum
        child_before = before[owner] + sib_before
        keep = w > 0
        if cap is not None:
            keep &= child_before < cap
        child, owner, child_before = child[keep], owner[keep], child_before[keep]
        node_ids.append(child + g.type_offsets[rtypes[k]][0])
        parents.append(owner)
        root_of = root_of[owner]
        before = child_before
        local = child
    return AggregationTree(p, node_ids, parents)


def build_tree(g, p, target, cap=None):
    """Aggregation tree of ``p`` rooted at ``target``."""
    return build_forest(g, p, [target], cap)


def tree_from_instances(p, instances, merge=True):
    """Build a single-root tree from explicit instances ending at one target.

    With ``merge=False`` every instance gets its own chain below the root,
    i.e. shared intermediate nodes are *not* shared in the tree.
    """
    p = MetaPath.parse(p)
    seqs = [tuple(int(x) for x in inst)[::-1] for inst in instances]
    if not seqs:
        raise ValueError("need at least one instance to infer the root")
    root = seqs[0][0]
    if any(s[0] != root for s in seqs) or any(len(s) != len(p) for s in seqs):
        raise ValueError("instances must all end at the same target and match the meta-path length")
    d = len(p) - 1
    # trie keyed by prefix (or by instance index when not merging)
    key_lists = [[()]]
    for k in range(1, d + 1):
        keys = sorted({s[: k + 1] if merge else (i, s[: k + 1]) for i, s in enumerate(seqs)},
                      key=lambda x: x if merge else (x[1], x[0]))
        key_lists.append(keys)
    node_ids = [np.array([root], dtype=np.int64)]
    parents = [None]
    for k in range(1, d + 1):
        prev = {key: i for i, key in enumerate(key_lists[k - 1])}
        ids, par = [], []
        for key in key_lists[k]:
            prefix = key if merge else key[1]
            ids.append(prefix[-1])
            if k == 1:
                par.append(0)
            else:
                par.append(prev[prefix[:-1] if merge else (key[0], prefix[:-1])])
        order = np.lexsort((np.arange(len(ids)), par))
        node_ids.append(np.asarray(ids, dtype=np.int64)[order])
        parents.append(np.asarray(par, dtype=np.int64)[order])
        # keys must follow the reordering so the next level resolves parents correctly
        key_lists[k] = [key_lists[k][i] for i in order]
    return AggregationTree(p, node_ids, parents)


def tree_rows(tree, names=None):
    """(depth, index, parent index, node) rows for dumping a tree."""
    rows = []
    for k in range(tree.depth + 1):
        for i, v in enumerate(tree.node_ids[k]):
            par = -1 if k == 0 else int(tree.parents[k][i])
            rows.append((k, i, par, names[v] if names else int(v)))
    return rows


def instance_histogram(instances):
    return Counter(inst[0] for inst in instances)


def default_metapaths(schema):
    """``B-X-B`` for every node type ``X`` adjacent to the basic type ``B``."""
    b = schema.basic_type
    return [MetaPath((b, x, b)) for x in schema.schema_neighbors(b) if x != b]
