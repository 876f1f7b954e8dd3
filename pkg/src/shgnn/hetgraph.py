"""Typed heterogeneous graph store and the on-disk dataset format.

Nodes get dense global ids: within each type they are sorted by their
original identifier (natural order, so ``m2`` comes before ``m10``) and the
type blocks are concatenated in schema order.  Edges are undirected and kept
as per-type-pair CSR biadjacency matrices in both directions.
"""
from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

SPLIT_NAMES = ("train", "validation", "test")


class DatasetError(ValueError):
    """Raised when a dataset directory or an in-memory graph is malformed."""


class SchemaError(DatasetError):
    pass


def natural_key(name):
    parts = re.split(r"(\d+)", name)
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts if p), name


@dataclass(frozen=True)
class Schema:
    node_types: tuple
    edge_types: tuple
    basic_type: str
    num_classes: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "node_types", tuple(self.node_types))
        object.__setattr__(self, "edge_types", tuple(tuple(e) for e in self.edge_types))
        if len(set(self.node_types)) != len(self.node_types):
            raise SchemaError(f"duplicate node type in {self.node_types}")
        for a, b in self.edge_types:
            if a not in self.node_types or b not in self.node_types:
                raise SchemaError(f"edge type {a}-{b} references an undeclared node type")
        pairs = [frozenset(e) for e in self.edge_types]
        if len(set(pairs)) != len(pairs):
            raise SchemaError("duplicate edge type")
        if len(self.node_types) + len(self.edge_types) <= 2:
            raise SchemaError(
                "not heterogeneous: need |node types| + |edge types| > 2, got "
                f"{len(self.node_types)} + {len(self.edge_types)}"
            )
        if self.basic_type not in self.node_types:
            raise SchemaError(f"basic type {self.basic_type!r} is not a declared node type")
        if self.num_classes is not None and self.num_classes < 1:
            raise SchemaError("num_classes must be positive")
        # connectivity of the type graph
        seen = {self.node_types[0]}
        frontier = [self.node_types[0]]
        while frontier:
            t = frontier.pop()
            for u in self.schema_neighbors(t):
                if u not in seen:
                    seen.add(u)
                    frontier.append(u)
        if len(seen) != len(self.node_types):
            missing = sorted(set(self.node_types) - seen)
            raise SchemaError(f"schema graph is disconnected; unreachable types {missing}")

    def has_edge_type(self, a, b):
        return any({a, b} == set(e) for e in self.edge_types)

    def schema_neighbors(self, t):
        out = set()
        for a, b in self.edge_types:
            if a == t:
                out.add(b)
            if b == t:
                out.add(a)
        return sorted(out)

    def type_index(self, t):
        return self.node_types.index(t)

    def to_dict(self):
        d = {
            "node_types": list(self.node_types),
            "edge_types": [list(e) for e in self.edge_types],
            "basic_type": self.basic_type,
        }
        if self.num_classes is not None:
            d["num_classes"] = self.num_classes
        return d


@dataclass(frozen=True)
class DatasetStats:
    node_counts: dict
    edge_counts: dict
    num_classes: int | None
    split_sizes: dict = field(default_factory=dict)


class HeteroGraph:
    """Immutable heterogeneous graph.

    Parameters
    ----------
    schema : Schema
    nodes : dict[str, list[str]]
        Original node identifiers per type, any order.
    edges : dict[tuple[str, str], list[tuple[str, str]]]
        Raw undirected edges per edge type, given as original ids.
    labels : dict[str, int], optional
        Class index per labeled node; only basic-type nodes may carry one.
    features : dict[str, array or sparse matrix], optional
        Raw feature rows per type aligned with the *sorted* node order.
    """

    def __init__(self, schema, nodes, edges, labels=None, features=None):
        self.schema = schema
        names, types, offsets = [], [], {}
        for ti, t in enumerate(schema.node_types):
            ids = sorted(set(map(str, nodes.get(t, ()))), key=natural_key)
            if len(ids) != len(nodes.get(t, ())):
                raise DatasetError(f"duplicate node id within type {t}")
            offsets[t] = (len(names), len(names) + len(ids))
            names.extend(ids)
            types.extend([ti] * len(ids))
        self.node_names = names
        self.node_type = np.asarray(types, dtype=np.int64)
        self.type_offsets = offsets
        self.index = {}
        for gid, n in enumerate(names):
            if n in self.index:
                raise DatasetError(f"node id {n!r} is used by more than one type")
            self.index[n] = gid

        self._adj = {}
        self.duplicate_edges = 0
        for a, b in schema.edge_types:
            raw = edges.get((a, b))
            if raw is None:
                raw = [(v, u) for u, v in edges.get((b, a), ())]
            rows, cols = [], []
            for u, v in raw:
                gu, gv = self.index.get(str(u)), self.index.get(str(v))
                if gu is None or gv is None:
                    raise DatasetError(f"edge {u}-{v} of type {a}-{b} has a missing endpoint")
                tu, tv = self.type_of(gu), self.type_of(gv)
                if (tu, tv) == (b, a):
                    gu, gv = gv, gu
                elif (tu, tv) != (a, b):
                    raise DatasetError(f"edge {u}-{v} has types {tu}-{tv}, expected {a}-{b}")
                rows.append(gu - offsets[a][0])
                cols.append(gv - offsets[b][0])
            na, nb = self.num_nodes_of(a), self.num_nodes_of(b)
            if a == b:
                rows, cols = rows + cols, cols + rows
            m = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(na, nb)).tocsr()
            total = m.nnz and int(m.sum())
            m.data[:] = 1.0
            if a == b:
                # each undirected same-type edge was inserted twice; self loops twice as well
                self.duplicate_edges += (total - m.nnz) // 2
            else:
                self.duplicate_edges += total - m.nnz
            m.sort_indices()
            self._adj[(a, b)] = m
            if a != b:
                mt = m.T.tocsr()
                mt.sort_indices()
                self._adj[(b, a)] = mt
            if m.nnz == 0:
                warnings.warn(f"edge type {a}-{b} has no edges", stacklevel=2)
        if self.duplicate_edges:
            warnings.warn(f"dropped {self.duplicate_edges} duplicate edges", stacklevel=2)

        n = len(names)
        self.labels = np.full(n, -1, dtype=np.int64)
        for name, y in (labels or {}).items():
            gid = self.index.get(str(name))
            if gid is None:
                raise DatasetError(f"label for unknown node {name!r}")
            if self.type_of(gid) != schema.basic_type:
                raise DatasetError(f"label on non-basic node {name!r}")
            y = int(y)
            if y < 0 or (schema.num_classes is not None and y >= schema.num_classes):
                raise DatasetError(f"label {y} of node {name!r} outside [0, {schema.num_classes})")
            self.labels[gid] = y

        self.features = {}
        for t, x in (features or {}).items():
            if t not in offsets:
                raise DatasetError(f"features for undeclared type {t}")
            x = sp.csr_matrix(x, dtype=np.float64)
            if x.shape[0] != self.num_nodes_of(t):
                raise DatasetError(
                    f"features of type {t} have {x.shape[0]} rows for {self.num_nodes_of(t)} nodes"
                )
            self.features[t] = x

    # -- basic queries -------------------------------------------------

    @property
    def num_nodes(self):
        return len(self.node_names)

    @property
    def num_classes(self):
        if self.schema.num_classes is not None:
            return self.schema.num_classes
        return int(self.labels.max()) + 1 if (self.labels >= 0).any() else 0

    def num_nodes_of(self, t):
        lo, hi = self.type_offsets[t]
        return hi - lo

    def nodes_of_type(self, t):
        lo, hi = self.type_offsets[t]
        return np.arange(lo, hi)

    def type_of(self, v):
        return self.schema.node_types[self.node_type[v]]

    def biadjacency(self, a, b):
        """CSR matrix (|V_a| x |V_b|) of local indices; all-zero if no edge type."""
        m = self._adj.get((a, b))
        if m is None:
            return sp.csr_matrix((self.num_nodes_of(a), self.num_nodes_of(b)))
        return m

    def neighbors_of_type(self, v, t):
        """Sorted global ids of the direct neighbors of ``v`` that have type ``t``."""
        src = self.type_of(v)
        m = self._adj.get((src, t))
        if m is None:
            return np.empty(0, dtype=np.int64)
        i = v - self.type_offsets[src][0]
        return m.indices[m.indptr[i]:m.indptr[i + 1]].astype(np.int64) + self.type_offsets[t][0]

    def neighbors(self, v):
        src = self.type_of(v)
        parts = [self.neighbors_of_type(v, t) for t in self.schema.schema_neighbors(src)]
        return np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)

    def adjacency(self):
        """Symmetric (N x N) adjacency over global ids, all edge types together."""
        n = self.num_nodes
        rows, cols = [], []
        for (a, b), m in self._adj.items():
            c = m.tocoo()
            rows.append(c.row + self.type_offsets[a][0])
            cols.append(c.col + self.type_offsets[b][0])
        if not rows:
            return sp.csr_matrix((n, n))
        r, c = np.concatenate(rows), np.concatenate(cols)
        m = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n)).tocsr()
        m.data[:] = 1.0
        return m

    def edge_count(self, a, b):
        m = self._adj.get((a, b))
        if m is None:
            return 0
        if a == b:
            loops = int(m.diagonal().sum())
            return (m.nnz - loops) // 2 + loops
        return m.nnz

    def edge_list(self, a, b):
        """Edges of type a-b as (u, v) global id pairs, u of type a, each once."""
        m = self.biadjacency(a, b).tocoo()
        u = m.row + self.type_offsets[a][0]
        v = m.col + self.type_offsets[b][0]
        keep = u <= v if a == b else np.ones(len(u), dtype=bool)
        order = np.lexsort((v[keep], u[keep]))
        return np.stack([u[keep][order], v[keep][order]], axis=1)

    def labeled_nodes(self):
        return np.flatnonzero(self.labels >= 0)

    def feature_dim(self, t):
        x = self.features.get(t)
        return None if x is None else x.shape[1]

    def stats(self, splits=None):
        return DatasetStats(
            node_counts={t: self.num_nodes_of(t) for t in self.schema.node_types},
            edge_counts={f"{a}-{b}": self.edge_count(a, b) for a, b in self.schema.edge_types},
            num_classes=self.num_classes,
            split_sizes={k: len(v) for k, v in (splits or {}).items()},
        )


# -- dataset directory I/O ---------------------------------------------


@dataclass
class Dataset:
    graph: HeteroGraph
    splits: dict

    def stats(self):
        return self.graph.stats(self.splits)


def _read_lines(path):
    if not path.exists():
        raise DatasetError(f"missing file: {path.name}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if line.strip():
                yield lineno, line


def _read_features(path, ids, dim=None):
    pos = {n: i for i, n in enumerate(ids)}
    rows, cols, vals = [], [], []
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        i = pos.get(parts[0])
        if i is None:
            raise DatasetError(f"{path.name}:{lineno}: unknown node {parts[0]!r}")
        for tok in parts[1:]:
            try:
                k, val = tok.split(":")
                rows.append(i)
                cols.append(int(k))
                vals.append(float(val))
            except ValueError:
                raise DatasetError(f"{path.name}:{lineno}: bad feature entry {tok!r}") from None
    width = dim if dim is not None else (max(cols) + 1 if cols else 0)
    if cols and max(cols) >= width:
        raise DatasetError(f"{path.name}: feature index {max(cols)} exceeds declared dim {width}")
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(ids), width))


def load_dataset(directory):
    """Read a dataset directory (see README for the layout) into a :class:`Dataset`."""
    root = Path(directory)
    spath = root / "schema.json"
    if not spath.exists():
        raise DatasetError(f"missing file: {spath.name}")
    meta = json.loads(spath.read_text(encoding="utf-8"))
    schema = Schema(
        meta["node_types"], meta["edge_types"], meta["basic_type"], meta.get("num_classes")
    )

    nodes = {}
    for t in schema.node_types:
        nodes[t] = [line.split("\t")[0].strip() for _, line in _read_lines(root / f"nodes_{t}.tsv")]
    known = {n: t for t, ids in nodes.items() for n in ids}

    edges = {}
    for a, b in schema.edge_types:
        fname = f"edges_{a}_{b}.tsv"
        pairs = []
        for lineno, line in _read_lines(root / fname):
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(f"{fname}:{lineno}: expected 2 columns, got {len(parts)}")
            u, v = parts[0].strip(), parts[1].strip()
            for x in (u, v):
                if x not in known:
                    raise DatasetError(f"{fname}:{lineno}: dangling endpoint {x!r}")
            if {known[u], known[v]} != {a, b}:
                raise DatasetError(f"{fname}:{lineno}: endpoint types {known[u]}-{known[v]}")
            pairs.append((u, v))
        edges[(a, b)] = pairs

    dims = meta.get("feature_dims", {})
    features = {}
    for t in schema.node_types:
        fpath = root / f"features_{t}.tsv"
        if not fpath.exists():
            if t == schema.basic_type:
                raise DatasetError(f"missing file: {fpath.name}")
            continue
        ids = sorted(nodes[t], key=natural_key)
        features[t] = _read_features(fpath, ids, dims.get(t))

    labels = {}
    for lineno, line in _read_lines(root / "labels.tsv"):
        parts = line.split("\t")
        if len(parts) != 2 or parts[0] not in known:
            raise DatasetError(f"labels.tsv:{lineno}: bad row {line!r}")
        labels[parts[0]] = int(parts[1])

    graph = HeteroGraph(schema, nodes, edges, labels, features)

    sfile = root / "splits.json"
    if not sfile.exists():
        raise DatasetError(f"missing file: {sfile.name}")
    raw = json.loads(sfile.read_text(encoding="utf-8"))
    splits = {}
    seen = set()
    for name in SPLIT_NAMES:
        ids = [str(x) for x in raw.get(name, [])]
        for x in ids:
            if x not in graph.index:
                raise DatasetError(f"splits.json: unknown node {x!r} in {name}")
            if x in seen:
                raise DatasetError(f"splits.json: node {x!r} appears in more than one split")
            seen.add(x)
        splits[name] = np.array([graph.index[x] for x in ids], dtype=np.int64)
    labeled = {graph.node_names[i] for i in graph.labeled_nodes()}
    if seen != labeled:
        extra, missing = sorted(seen - labeled)[:3], sorted(labeled - seen)[:3]
        raise DatasetError(
            f"splits must cover exactly the labeled nodes (unlabeled in splits: {extra}, "
            f"labeled but unsplit: {missing})"
        )
    return Dataset(graph, splits)


def _fmt(x):
    return repr(float(x))


def save_dataset(dataset, directory):
    """Write ``dataset`` in the directory layout understood by :func:`load_dataset`."""
    g, root = dataset.graph, Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    meta = g.schema.to_dict()
    if meta.get("num_classes") is None:
        meta["num_classes"] = g.num_classes
    meta["feature_dims"] = {t: x.shape[1] for t, x in g.features.items()}
    (root / "schema.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    for t in g.schema.node_types:
        ids = [g.node_names[i] for i in g.nodes_of_type(t)]
        (root / f"nodes_{t}.tsv").write_text("".join(f"{n}\n" for n in ids), encoding="utf-8")
    for a, b in g.schema.edge_types:
        rows = g.edge_list(a, b)
        text = "".join(f"{g.node_names[u]}\t{g.node_names[v]}\n" for u, v in rows)
        (root / f"edges_{a}_{b}.tsv").write_text(text, encoding="utf-8")
    for t, x in g.features.items():
        lo = g.type_offsets[t][0]
        lines = []
        for i in range(x.shape[0]):
            s, e = x.indptr[i], x.indptr[i + 1]
            cells = [f"{k}:{_fmt(v)}" for k, v in zip(x.indices[s:e], x.data[s:e])]
            lines.append("\t".join([g.node_names[lo + i], *cells]) + "\n")
        (root / f"features_{t}.tsv").write_text("".join(lines), encoding="utf-8")
    lab = g.labeled_nodes()
    (root / "labels.tsv").write_text(
        "".join(f"{g.node_names[i]}\t{g.labels[i]}\n" for i in lab), encoding="utf-8"
    )
    splits = {k: [g.node_names[i] for i in dataset.splits.get(k, [])] for k in SPLIT_NAMES}
    (root / "splits.json").write_text(json.dumps(splits, indent=1) + "\n", encoding="utf-8")
