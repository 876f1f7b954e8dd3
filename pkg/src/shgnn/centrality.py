"""Meta-path coverage centrality and its one-hot encoding.

``c(v)`` counts how often ``v`` occurs across every instance of every
configured meta-path; a node appearing twice in one instance (``m-a-m``)
counts twice.  ``c_plus(v)`` sums ``c`` over the direct neighbors of ``v``
regardless of their type.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metapath import MetaPath, build_forest


@dataclass(frozen=True)
class CentralityTable:
    c: np.ndarray
    c_plus: np.ndarray

    def __post_init__(self):
        if (self.c < 0).any() or (self.c_plus < 0).any():
            raise ValueError("coverage counts must be non-negative")


def coverage_from_trees(num_nodes, trees):
    """Occurrence counts from prebuilt aggregation trees.

    A tree node standing for graph node ``g`` lies on every instance below
    it, so it contributes its subtree leaf count to ``c(g)``.
    """
    c = np.zeros(num_nodes, dtype=np.int64)
    for tree in trees:
        for ids, w in zip(tree.node_ids, tree.subtree_leaf_counts()):
            c += np.bincount(ids, weights=w, minlength=num_nodes).round().astype(np.int64)
    return c


def count_coverage(g, metapaths, cap=None, trees=None):
    """Coverage centralities over all instances of ``metapaths``.

    ``trees`` may pass forests already built for every end-type node, which
    avoids enumerating twice when the model needs them anyway.
    """
    if trees is None:
        trees = []
        for p in metapaths:
            p = MetaPath.parse(p).validate(g.schema)
            trees.append(build_forest(g, p, g.nodes_of_type(p.end), cap))
    c = coverage_from_trees(g.num_nodes, trees)
    c_plus = np.asarray(g.adjacency() @ c.astype(np.float64)).round().astype(np.int64)
    return CentralityTable(c, c_plus)


def bucket(counts, d1, mode="clamp"):
    """One-hot index for each count: ``min(count, d1 - 1)`` or a log2 bucket."""
    counts = np.asarray(counts, dtype=np.int64)
    if d1 < 1:
        raise ValueError("d1 must be at least 1")
    if mode == "clamp":
        idx = counts
    elif mode == "log":
        idx = np.floor(np.log2(1.0 + counts)).astype(np.int64)
    else:
        raise ValueError(f"unknown bucketing mode {mode!r}")
    return np.minimum(idx, d1 - 1)


def one_hot(index, dim):
    out = np.zeros((len(index), dim))
    out[np.arange(len(index)), index] = 1.0
    return out


def centrality_onehots(table, d1, mode="clamp", use_c=True, use_cplus=True):
    """Concatenated one-hot codes ``(z_c || z'_c+)``, shape (N, 2*d1).

    A disabled half is left all-zero.
    """
    zc = one_hot(bucket(table.c, d1, mode), d1)
    zp = one_hot(bucket(table.c_plus, d1, mode), d1)
    if not use_c:
        zc[:] = 0.0
    if not use_cplus:
        zp[:] = 0.0
    return np.hstack([zc, zp])


def encode_centrality(g, table, d1, wz, mode="clamp"):
    """Transformed centrality embedding per node, (N, d1).

    ``wz`` maps node type -> (d1, 2*d1) matrix.
    """
    z = centrality_onehots(table, d1, mode)
    out = np.zeros((g.num_nodes, d1))
    for t in g.schema.node_types:
        rows = g.nodes_of_type(t)
        out[rows] = z[rows] @ np.asarray(wz[t]).T
    return out


def build_latent(xhat, zhat):
    """``(x_hat || z_hat)`` with the structural part first."""
    xhat, zhat = np.asarray(xhat), np.asarray(zhat)
    if xhat.shape[-1] != zhat.shape[-1] or xhat.shape[:-1] != zhat.shape[:-1]:
        raise ValueError(f"latent parts differ in shape: {xhat.shape} vs {zhat.shape}")
    return np.concatenate([xhat, zhat], axis=-1)


def histogram_summary(g, table):
    """Per-type summary of both counts: range, mean and a log2-bucket histogram."""
    out = {}
    for t in g.schema.node_types:
        rows = g.nodes_of_type(t)
        entry = {}
        for name, vals in (("c", table.c[rows]), ("c_plus", table.c_plus[rows])):
            if len(vals) == 0:
                entry[name] = {"min": 0, "max": 0, "mean": 0.0, "distinct": 0, "log2_hist": {}}
                continue
            b = np.floor(np.log2(1.0 + vals)).astype(int)
            hist = {str(k): int(n) for k, n in zip(*np.unique(b, return_counts=True))}
            entry[name] = {
                "min": int(vals.min()),
                "max": int(vals.max()),
                "mean": float(vals.mean()),
                "distinct": int(len(np.unique(vals))),
                "log2_hist": hist,
            }
        out[t] = entry
    return out
