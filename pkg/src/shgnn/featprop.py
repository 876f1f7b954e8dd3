"""Spread basic-type features over the schema and project them per type."""
from __future__ import annotations

import logging
from collections import deque

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


def schema_bfs_order(schema):
    """Node types by hop distance from the basic type, ties by name."""
    dist = {schema.basic_type: 0}
    queue = deque([schema.basic_type])
    while queue:
        t = queue.popleft()
        for u in schema.schema_neighbors(t):
            if u not in dist:
                dist[u] = dist[t] + 1
                queue.append(u)
    return sorted(dist, key=lambda t: (dist[t], t)), dist


def propagate_features(g):
    """Feature matrix for every node type.

    Each featureless type takes, per node, the mean of the feature rows of its
    neighbors in the nearest already-featured type.  Types are filled in
    breadth-first order from the basic type; when two featured neighbor types
    are equally near the lexicographically smaller name wins.  Types that came
    with their own features keep them.

    Returns a dict type -> CSR matrix with a shared column count.
    """
    schema = g.schema
    if schema.basic_type not in g.features:
        raise ValueError(f"basic type {schema.basic_type} has no features")
    dims = {x.shape[1] for x in g.features.values()}
    if len(dims) != 1:
        raise ValueError(f"provided feature dimensions differ across types: {sorted(dims)}")
    order, dist = schema_bfs_order(schema)
    table = {t: sp.csr_matrix(x, dtype=np.float64) for t, x in g.features.items()}
    for t in order:
        if t in table:
            continue
        sources = [u for u in schema.schema_neighbors(t) if u in table]
        # BFS order guarantees the parent type is already filled
        src = min(sources, key=lambda u: (dist[u], u))
        adj = g.biadjacency(t, src)
        deg = np.asarray(adj.sum(axis=1)).ravel()
        lonely = int((deg == 0).sum())
        if lonely:
            log.warning("%d nodes of type %s have no %s neighbors; using zero features",
                        lonely, t, src)
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        table[t] = sp.csr_matrix(sp.diags(inv) @ adj @ table[src])
        table[t].sort_indices()
    return {t: table[t] for t in schema.node_types}


def transform_features(x, weights):
    """Per-type linear map ``x_v -> W[type] @ x_v`` (no bias, no activation).

    ``x`` maps type -> (n, d0) array or sparse matrix and ``weights`` maps
    type -> (d1, d0) array.  Returns dense (n, d1) arrays.
    """
    out = {}
    for t, feats in x.items():
        w = np.asarray(weights[t], dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != feats.shape[1]:
            raise ValueError(f"type {t}: weight shape {w.shape} does not match feature dim "
                             f"{feats.shape[1]}")
        out[t] = np.asarray(feats @ w.T)
    return out
