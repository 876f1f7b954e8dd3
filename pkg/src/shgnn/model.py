"""The SHGNN forward pass on top of :mod:`shgnn.autodiff`.

One forward pass:

1. node latents ``h_hat = (W_x x || W_z (z_c || z'_c+))`` per type;
2. for each layer and each node type with meta-paths, bottom-up tree
   attention on every meta-path's aggregation trees (cosine scores between
   the layer input vectors of parent and child, softmax per parent, weighted
   sum of child messages);
3. meta-path fusion with a per-type attention vector ``q`` over the summaries
   ``mean(tanh(W_h h + b))``;
4. inner layers project with ``elu(W_o^l .)`` back to the latent width and
   feed the next layer; the last layer projects the basic type to ``C``
   logits with ``elu(W_o .)``.  Class probabilities are the row softmax.

All tree levels of one meta-path are processed together, so a layer costs a
handful of vectorised ops per tree depth.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .centrality import centrality_onehots, count_coverage
from .config import TrainConfig
from .featprop import propagate_features
from .metapath import MetaPath, build_forest, default_metapaths

CHECKPOINT_VERSION = 1


def xavier(rng, shape):
    fan_out, fan_in = (shape[0], shape[1]) if len(shape) == 2 else (1, shape[0])
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class ForwardResult:
    logits: ad.Tensor  # elu(W_o h), one row per basic-type node
    probs: np.ndarray
    alphas: list = field(default_factory=list)  # (layer, meta-path, depth, alpha, parent ids)
    betas: dict = field(default_factory=dict)  # (layer, type) -> beta


def softmax_rows(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class _Level:
    __slots__ = ("child_ids", "parent_ids", "parent_slot", "n_parents")

    def __init__(self, tree, k):
        self.child_ids = tree.node_ids[k]
        self.parent_slot = tree.parents[k]
        self.parent_ids = tree.node_ids[k - 1][tree.parents[k]]
        self.n_parents = tree.level_size(k - 1)


class _TreePlan:
    """Index arrays for running attention over one (possibly multi-root) tree."""

    def __init__(self, tree):
        self.tree = tree
        self.roots = tree.roots
        self.levels = [_Level(tree, k) for k in range(tree.depth, 0, -1)]
        self.leaf_ids = tree.node_ids[tree.depth]
        has_child = tree.child_counts(0) > 0 if tree.depth else np.zeros(len(tree.roots), bool)
        self.childless = (~has_child).astype(np.float64)[:, None]


def tree_attention(H, plan, tree_sigma=False, record=None):
    """Root messages of every root in ``plan``; ``H`` holds the input vectors.

    Leaves start with their own row of ``H``.  A root without children passes
    its own row through.
    """
    if not plan.levels:
        return ad.gather_rows(H, plan.roots)
    msg = ad.gather_rows(H, plan.leaf_ids)
    for lv in plan.levels:
        e = ad.cosine_sim(ad.gather_rows(H, lv.parent_ids), ad.gather_rows(H, lv.child_ids))
        alpha = ad.segment_softmax(e, lv.parent_slot, lv.n_parents)
        if record is not None:
            record.append((alpha.data.copy(), lv.parent_slot))
        weighted = ad.mul(ad.reshape(alpha, (-1, 1)), msg)
        msg = ad.segment_sum(weighted, lv.parent_slot, lv.n_parents)
        if tree_sigma:
            msg = ad.elu(msg)
    if plan.childless.any():
        msg = ad.add(msg, ad.mul(plan.childless, ad.gather_rows(H, plan.roots)))
    return msg


def metapath_summary(messages, wh, b):
    """``mean_v tanh(W_h m_v + b)`` over the rows of ``messages``."""
    return ad.row_mean(ad.tanh(ad.linear(messages, wh, b)))


def metapath_fuse(summaries, q, messages):
    """Softmax weights over meta-paths and the weighted sum of their messages."""
    u = ad.concat([ad.reshape(ad.matvec(s, q), (1,)) for s in summaries])
    beta = ad.softmax_vec(u)
    fused = None
    for j, m in enumerate(messages):
        term = ad.mul(ad.index(beta, j), m)
        fused = term if fused is None else ad.add(fused, term)
    return fused, beta


class SHGNN:
    """Model bound to one graph: holds trees, encodings and parameters.

    Parameters are plain :class:`autodiff.Tensor` objects in ``self.params``
    (an insertion-ordered dict), so optimisers and checkpoints can treat them
    uniformly.
    """

    def __init__(self, g, config=None, num_classes=None):
        self.g = g
        self.config = config = config or TrainConfig()
        schema = g.schema
        paths = [MetaPath.parse(p) for p in config.metapaths] or default_metapaths(schema)
        for p in paths:
            p.validate(schema)
            if p.start != p.end:
                raise ValueError(f"meta-path {p.name}: aggregation needs start type == end type")
        self.metapaths = paths
        self.by_type = {t: [p for p in paths if p.end == t] for t in schema.node_types}
        self.by_type = {t: ps for t, ps in self.by_type.items() if ps}
        self.num_classes = num_classes or g.num_classes

        self.features = propagate_features(g)
        self.d0 = next(iter(self.features.values())).shape[1]
        self.d1 = config.d1
        self.latent_dim = 2 * self.d1 if config.use_centrality else self.d1

        self.trees = {}
        for p in paths:
            self.trees[p.name] = build_forest(g, p, g.nodes_of_type(p.end), config.instance_cap)
        self.centrality = count_coverage(g, paths, trees=list(self.trees.values()))
        self.plans = {}
        for name, tree in self.trees.items():
            self.plans[name] = _TreePlan(tree if config.use_tree_attention else tree.flattened())

        if config.use_centrality:
            z = centrality_onehots(self.centrality, self.d1, config.centrality_bucketing,
                                   config.use_centrality_c, config.use_centrality_cplus)
            self.onehots = {t: sp.csr_matrix(z[g.nodes_of_type(t)]) for t in schema.node_types}
        else:
            self.onehots = None
        self.params = self.init_params(config.seed)

    # -- parameters -----------------------------------------------------

    def param_shapes(self):
        d0, d1, D, L = self.d0, self.d1, self.latent_dim, self.config.layers
        shapes = {}
        for t in self.g.schema.node_types:
            shapes[f"Wx/{t}"] = (d1, d0)
            if self.config.use_centrality:
                shapes[f"Wz/{t}"] = (d1, 2 * d1)
        for layer in range(1, L + 1):
            types = list(self.by_type) if layer < L else (
                [self.g.schema.basic_type] if self.g.schema.basic_type in self.by_type else [])
            for t in types:
                shapes[f"Wh/{layer}/{t}"] = (d1, D)
                shapes[f"b/{layer}/{t}"] = (d1,)
                shapes[f"q/{layer}/{t}"] = (d1,)
            if layer < L:
                shapes[f"Wo/{layer}"] = (D, D)
        shapes["Wo/out"] = (self.num_classes, D)
        return shapes

    def init_params(self, seed):
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in self.param_shapes().items():
            data = np.zeros(shape) if name.startswith("b/") else xavier(rng, shape)
            params[name] = ad.Tensor(data, requires_grad=True, name=name)
        return params

    def param_vector(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_param_values(self, values):
        for k, v in values.items():
            if self.params[k].shape != np.shape(v):
                raise ValueError(f"parameter {k}: shape {np.shape(v)} != {self.params[k].shape}")
            self.params[k].data = np.array(v, dtype=np.float64)

    # -- forward ----------------------------------------------------------

    def latents(self):
        """Layer-1 input vectors for all nodes (global id order)."""
        blocks = []
        for t in self.g.schema.node_types:
            x = ad.matmul(self.features[t], ad.transpose(self.params[f"Wx/{t}"]))
            if self.onehots is not None:
                z = ad.matmul(self.onehots[t], ad.transpose(self.params[f"Wz/{t}"]))
                x = ad.concat([x, z], axis=1)
            blocks.append(x)
        return ad.concat(blocks, axis=0)

    def _fuse_type(self, H, layer, t, result):
        paths = self.by_type.get(t)
        lo, hi = self.g.type_offsets[t]
        if not paths:
            return ad.index(H, slice(lo, hi))
        msgs = []
        for p in paths:
            rec = [] if result is not None else None
            msgs.append(tree_attention(H, self.plans[p.name], self.config.tree_sigma, rec))
            if rec is not None:
                result.alphas.extend((layer, p.name, i, a, s) for i, (a, s) in enumerate(rec))
        wh, b, q = (self.params[f"{k}/{layer}/{t}"] for k in ("Wh", "b", "q"))
        summaries = [metapath_summary(m, wh, b) for m in msgs]
        fused, beta = metapath_fuse(summaries, q, msgs)
        if result is not None:
            result.betas[(layer, t)] = beta.data.copy()
        return fused

    def forward(self, record=False):
        result = ForwardResult(None, None) if record else None
        H = self.latents()
        L = self.config.layers
        for layer in range(1, L):
            fused = [self._fuse_type(H, layer, t, result) for t in self.g.schema.node_types]
            H = ad.elu(ad.linear(ad.concat(fused, axis=0), self.params[f"Wo/{layer}"]))
        fused = self._fuse_type(H, L, self.g.schema.basic_type, result)
        logits = ad.elu(ad.linear(fused, self.params["Wo/out"]))
        probs = softmax_rows(logits.data)
        if result is None:
            return ForwardResult(logits, probs)
        result.logits, result.probs = logits, probs
        return result

    def local_index(self, nodes):
        lo, hi = self.g.type_offsets[self.g.schema.basic_type]
        nodes = np.asarray(nodes, dtype=np.int64)
        if ((nodes < lo) | (nodes >= hi)).any():
            raise ValueError("loss/prediction nodes must be basic-type nodes")
        return nodes - lo

    def loss(self, out, nodes):
        """Summed cross-entropy over ``nodes`` (global ids of labeled basic-type nodes)."""
        nodes = np.asarray(nodes, dtype=np.int64)
        if len(nodes) == 0:
            raise ValueError("empty labeled set")
        labels = self.g.labels[nodes]
        if (labels < 0).any():
            raise ValueError("loss over unlabeled nodes")
        return ad.cross_entropy(ad.gather_rows(out.logits, self.local_index(nodes)), labels)

    def embeddings(self):
        """Pre-softmax outputs (``elu(W_o h)``) for every basic-type node."""
        return self.forward().logits.data.copy()

    # -- checkpoints ------------------------------------------------------

    def checkpoint(self):
        return {
            "version": CHECKPOINT_VERSION,
            "config_sha256": self.config.digest(),
            "config": self.config.to_dict(),
            "params": {k: {"shape": list(v.shape), "data": v.data.reshape(-1).tolist()}
                       for k, v in self.params.items()},
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.checkpoint(), fh)
            fh.write("\n")

    def restore(self, ckpt):
        if isinstance(ckpt, (str, bytes)) or hasattr(ckpt, "__fspath__"):
            with open(ckpt, encoding="utf-8") as fh:
                ckpt = json.load(fh)
        if ckpt.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {ckpt.get('version')}")
        if ckpt["config_sha256"] != self.config.digest():
            raise ValueError("checkpoint was written for a different config")
        self.load_param_values({k: np.reshape(v["data"], v["shape"])
                                for k, v in ckpt["params"].items()})


def nll_from_probs(probs, labels):
    """``-sum_v log probs[v, y_v]``; the unfused form of the objective."""
    probs = np.asarray(probs)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ValueError("empty labeled set")
    return float(-np.log(probs[np.arange(len(labels)), labels]).sum())
