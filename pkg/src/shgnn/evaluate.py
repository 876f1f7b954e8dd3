"""Downstream evaluation: linear SVM node classification and K-Means clustering.

Both classifiers are implemented here with numpy so reports are fully
reproducible from ``(embeddings, labels, seed)``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

FRACTIONS = (0.2, 0.4, 0.6, 0.8)


# -- metrics ---------------------------------------------------------------


def _check(pred, true):
    pred, true = np.asarray(pred), np.asarray(true)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError(f"label sequences differ in shape: {pred.shape} vs {true.shape}")
    return pred, true


def per_class_f1(pred, true, classes=None):
    pred, true = _check(pred, true)
    classes = np.union1d(pred, true) if classes is None else np.asarray(classes)
    out = []
    for c in classes:
        tp = np.sum((pred == c) & (true == c))
        fp = np.sum((pred == c) & (true != c))
        fn = np.sum((pred != c) & (true == c))
        den = 2 * tp + fp + fn
        if den == 0:
            log.info("class %s has no true or predicted members; F1 set to 0", c)
        out.append(2 * tp / den if den else 0.0)
    return np.asarray(out, dtype=np.float64)


def macro_f1(pred, true, classes=None):
    return float(per_class_f1(pred, true, classes).mean())


def micro_f1(pred, true):
    # single-label multi-class: pooled TP = correct, pooled FP = pooled FN = wrong
    pred, true = _check(pred, true)
    return float(np.mean(pred == true)) if len(true) else 0.0


def contingency(a, b):
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1 if len(ia) else 0, ib.max() + 1 if len(ib) else 0))
    np.add.at(table, (ia, ib), 1)
    return table


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred, true):
    """Mutual information normalised by the arithmetic mean of the two entropies."""
    pred, true = _check(pred, true)
    t = contingency(true, pred)
    n = t.sum()
    ha, hb = _entropy(t.sum(axis=1)), _entropy(t.sum(axis=0))
    if ha == 0 and hb == 0:
        return 1.0
    nz = t > 0
    pij = t[nz] / n
    outer = np.outer(t.sum(axis=1), t.sum(axis=0))[nz] / n**2
    mi = float((pij * np.log(pij / outer)).sum())
    return max(0.0, min(1.0, mi / ((ha + hb) / 2)))


def _comb2(x):
    return x * (x - 1) / 2.0


def ari(pred, true):
    """Adjusted Rand index (hypergeometric expectation)."""
    pred, true = _check(pred, true)
    t = contingency(true, pred)
    n = t.sum()
    sum_ij = _comb2(t).sum()
    sa, sb = _comb2(t.sum(axis=1)).sum(), _comb2(t.sum(axis=0)).sum()
    expected = sa * sb / _comb2(n) if n > 1 else 0.0
    max_index = (sa + sb) / 2
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


# -- linear SVM ------------------------------------------------------------


class LinearSVM:
    """One-vs-rest linear SVM on L2-regularised hinge loss.

    Full-batch subgradient descent from zero weights, so training involves no
    randomness at all.
    """

    def __init__(self, lr=0.01, iterations=500, reg=1e-3):
        self.lr, self.iterations, self.reg = lr, iterations, reg

    def fit(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        n, d = x.shape
        k = len(self.classes_)
        # +1 for the own class, -1 for the rest; one column per binary problem
        t = np.where(y[:, None] == self.classes_[None, :], 1.0, -1.0)
        w = np.zeros((d, k))
        b = np.zeros(k)
        for _ in range(self.iterations):
            margin = t * (x @ w + b)
            active = (margin < 1.0) * t
            gw = self.reg * w - x.T @ active / n
            gb = -active.sum(axis=0) / n
            w -= self.lr * gw
            b -= self.lr * gb
        self.w_, self.b_ = w, b
        return self

    def decision_function(self, x):
        return np.asarray(x, dtype=np.float64) @ self.w_ + self.b_

    def predict(self, x):
        return self.classes_[self.decision_function(x).argmax(axis=1)]


def stratified_split(labels, train_fraction, rng):
    """Indices (train, test) with every class present on both sides when possible."""
    labels = np.asarray(labels)
    tr, te = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        k = int(round(train_fraction * len(idx)))
        if len(idx) > 1:
            k = min(max(k, 1), len(idx) - 1)
        tr.extend(idx[:k])
        te.extend(idx[k:])
    return np.sort(np.asarray(tr, dtype=np.int64)), np.sort(np.asarray(te, dtype=np.int64))


@dataclass
class EvalReport:
    task: str
    metrics: dict
    seeds: list
    runs: int
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def svm_evaluate(embeddings, labels, fractions=FRACTIONS, seed=0, runs=10, **svm_kw):
    """Macro/Micro-F1 of a linear SVM trained on a fraction of the given nodes.

    For every fraction and each of ``runs`` seeds the rows are split
    (stratified) into SVM-train and SVM-test parts.  Scores are averaged over
    runs; the per-run values are kept in the report.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    if len(x) != len(y):
        raise ValueError("embeddings and labels are not row-aligned")
    seeds = [seed + r for r in range(runs)]
    metrics = {}
    for frac in fractions:
        if not 0.0 < frac < 1.0:
            raise ValueError(f"training fraction {frac} outside (0, 1)")
        macro, micro = [], []
        for s in seeds:
            rng = np.random.default_rng(s)
            for _ in range(100):
                tr, te = stratified_split(y, frac, rng)
                if len(np.unique(y[tr])) == len(np.unique(y)):
                    break
            clf = LinearSVM(**svm_kw).fit(x[tr], y[tr])
            pred = clf.predict(x[te])
            classes = np.unique(y)
            macro.append(macro_f1(pred, y[te], classes))
            micro.append(micro_f1(pred, y[te]))
        metrics[f"{frac:g}"] = {
            "macro_f1": float(np.mean(macro)), "micro_f1": float(np.mean(micro)),
            "macro_f1_std": float(np.std(macro)), "micro_f1_std": float(np.std(micro)),
            "macro_f1_runs": macro, "micro_f1_runs": micro,
        }
    return EvalReport("classification", metrics, seeds, runs)


# -- K-Means ---------------------------------------------------------------


def _kmeanspp(x, k, rng):
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        i = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(x[i])
        d2 = np.minimum(d2, ((x - x[i]) ** 2).sum(axis=1))
    return np.array(centers)


def _assign(x, centers):
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    lab = d2.argmin(axis=1)
    return lab, d2[np.arange(len(x)), lab]


def lloyd(x, centers, max_iter=300, tol=1e-8):
    centers = centers.copy()
    for _ in range(max_iter):
        lab, dist = _assign(x, centers)
        new = centers.copy()
        for j in range(len(centers)):
            members = lab == j
            if members.any():
                new[j] = x[members].mean(axis=0)
            else:
                far = dist.argmax()
                new[j] = x[far]
                dist[far] = 0.0
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if shift < tol:
            break
    lab, dist = _assign(x, centers)
    return lab, centers, float(dist.sum())


def kmeans(x, k, seed=0, restarts=10, max_iter=300, tol=1e-8):
    """K-Means++ seeding + Lloyd iterations; keeps the lowest-inertia restart."""
    x = np.asarray(x, dtype=np.float64)
    if not 1 <= k <= len(x):
        raise ValueError(f"k={k} with {len(x)} points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        lab, centers, inertia = lloyd(x, _kmeanspp(x, k, rng), max_iter, tol)
        if best is None or inertia < best[2]:
            best = (lab, centers, inertia)
    return best


def kmeans_evaluate(embeddings, labels, k=None, seed=0, runs=10, restarts=10):
    """NMI/ARI of K-Means clusters against ``labels``, averaged over ``runs`` seeds."""
    y = np.asarray(labels)
    k = k or len(np.unique(y))
    seeds = [seed + r for r in range(runs)]
    nmis, aris, inertias = [], [], []
    for s in seeds:
        lab, _, inertia = kmeans(embeddings, k, s, restarts)
        nmis.append(nmi(lab, y))
        aris.append(ari(lab, y))
        inertias.append(inertia)
    metrics = {"nmi": float(np.mean(nmis)), "ari": float(np.mean(aris)),
               "nmi_std": float(np.std(nmis)), "ari_std": float(np.std(aris)),
               "nmi_runs": nmis, "ari_runs": aris}
    return EvalReport("clustering", metrics, seeds, runs, {"k": k, "inertia": inertias})


# -- embedding files -------------------------------------------------------


def _fmt(v):
    return repr(float(v))


def write_embeddings(path, names, vectors):
    vectors = np.asarray(vectors)
    lines = ["\t".join([n, *map(_fmt, row)]) + "\n" for n, row in zip(names, vectors)]
    Path(path).write_text("".join(lines), encoding="utf-8")


def export_embeddings(model, path):
    """Write pre-softmax output rows of every basic-type node as TSV."""
    g = model.g
    names = [g.node_names[i] for i in g.nodes_of_type(g.schema.basic_type)]
    write_embeddings(path, names, model.embeddings())


def read_embeddings(path):
    names, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            names.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    return names, np.array(rows, dtype=np.float64)


def read_labels(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                name, y = line.rstrip("\n").split("\t")
                out[name] = int(y)
    return out
