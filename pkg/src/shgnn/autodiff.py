"""A small reverse-mode autodiff engine over float64 numpy arrays.

Every op returns a new :class:`Tensor` that remembers its inputs and a closure
mapping the output gradient to input gradients.  Tensors carry a creation
counter; since inputs always exist before outputs, walking the reachable
nodes in decreasing counter order is a valid reverse topological order.

Segment ops (``segment_sum``, ``segment_softmax``) expect segment ids sorted
in non-decreasing order, which is how aggregation-tree levels are laid out.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

_counter = itertools.count()

COSINE_EPS = 1e-12
ELU_ALPHA = 1.0

# number of times a guarded op hit its singular region since the last reset
guard_hits = 0


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_id", "op")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward
        self._id = next(_counter)
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    __add__ = lambda self, o: add(self, o)
    __radd__ = lambda self, o: add(o, self)
    __sub__ = lambda self, o: add(self, neg(o))
    __rsub__ = lambda self, o: add(o, neg(self))
    __mul__ = lambda self, o: mul(self, o)
    __rmul__ = lambda self, o: mul(o, self)
    __matmul__ = lambda self, o: matmul(self, o)
    __rmatmul__ = lambda self, o: matmul(o, self)
    __neg__ = lambda self: neg(self)
    __getitem__ = lambda self, idx: index(self, idx)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward, op):
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, None, parents, backward, op)
    return Tensor(data, op=op)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise ---------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: {a.shape} vs {b.shape}") from exc
    return _node(out, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def neg(a):
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}") from exc
    return _node(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape),
                                         _unbroadcast(g * a.data, b.shape)), "mul")


def scale(a, c):
    a = as_tensor(a)
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _node(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def exp(a):
    a = as_tensor(a)
    y = np.exp(a.data)
    return _node(y, (a,), lambda g: (g * y,), "exp")


def elu(a, alpha=ELU_ALPHA):
    a = as_tensor(a)
    x = a.data
    neg_part = alpha * np.expm1(np.minimum(x, 0.0))
    y = np.where(x > 0, x, neg_part)
    dy = np.where(x > 0, 1.0, neg_part + alpha)
    return _node(y, (a,), lambda g: (g * dy,), "elu")


def log(a):
    a = as_tensor(a)
    if (a.data <= 0).any():
        raise ValueError("log of a non-positive value")
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


# -- shape ops -----------------------------------------------------------


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose expects a matrix")
    return _node(a.data.T, (a,), lambda g: (g.T,), "transpose")


def concat(tensors, axis=0):
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {[t.shape for t in ts]}") from exc
    bounds = np.cumsum([0] + [t.shape[axis] for t in ts])

    def back(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds, bounds[1:]))

    return _node(out, ts, back, "concat")


def index(a, idx):
    """Basic or advanced indexing; gradients scatter-add back."""
    a = as_tensor(a)
    out = a.data[idx]

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _node(out, (a,), back, "index")


def slice_cols(a, start, stop):
    return index(a, (slice(None), slice(start, stop)))


def gather_rows(a, rows):
    """``a[rows]`` for an integer index array; repeated rows accumulate gradient."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)
    out = a.data[rows]

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, rows, g)
        return (full,)

    return _node(out, (a,), back, "gather_rows")


# -- reductions ----------------------------------------------------------


def sum(a, axis=None):  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    out = a.data.sum(axis=axis)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _node(out, (a,), back, "sum")


def row_mean(a):
    """Mean over rows (axis 0)."""
    a = as_tensor(a)
    n = a.shape[0]
    if n == 0:
        raise ShapeError("row_mean of an empty matrix")
    return _node(a.data.mean(axis=0), (a,),
                 lambda g: (np.broadcast_to(g / n, a.shape).copy(),), "row_mean")


# -- linear algebra ------------------------------------------------------


def matmul(a, b):
    """Matrix/vector products; ``a`` may be a constant scipy sparse matrix."""
    if sp.issparse(a):
        b = as_tensor(b)
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
        out = np.asarray(a @ b.data)
        at = a.T.tocsr()
        return _node(out, (b,), lambda g: (np.asarray(at @ g),), "spmatmul")
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def back(g):
        A, B = a.data, b.data
        if A.ndim == 2 and B.ndim == 2:
            return g @ B.T, A.T @ g
        if A.ndim == 2:
            return np.outer(g, B), A.T @ g
        if B.ndim == 2:
            return B @ g, np.outer(A, g)
        return g * B, g * A

    return _node(out, (a, b), back, "matmul")


matvec = matmul


def linear(x, w, b=None):
    """Row-wise ``x @ w.T (+ b)`` with ``w`` stored as (out, in)."""
    y = matmul(x, transpose(w))
    return y if b is None else add(y, b)


# -- attention pieces ----------------------------------------------------


def softmax(a, axis=-1):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _node(s, (a,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),), "softmax")


def softmax_vec(a):
    a = as_tensor(a)
    if a.ndim != 1:
        raise ShapeError("softmax_vec expects a vector")
    return softmax(a, axis=0)


def cosine_sim(a, b):
    """Cosine similarity of two vectors, or row-wise for two (n, d) matrices.

    If either norm is below ``COSINE_EPS`` the value is 0 and no gradient
    flows through that pair.
    """
    global guard_hits
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.ndim not in (1, 2):
        raise ShapeError(f"cosine_sim: {a.shape} vs {b.shape}")
    A, B = np.atleast_2d(a.data), np.atleast_2d(b.data)
    na, nb = np.linalg.norm(A, axis=1), np.linalg.norm(B, axis=1)
    ok = (na >= COSINE_EPS) & (nb >= COSINE_EPS)
    guard_hits += int((~ok).sum())
    safe_a, safe_b = np.where(ok, na, 1.0), np.where(ok, nb, 1.0)
    dots = np.einsum("ij,ij->i", A, B)
    c = np.where(ok, dots / (safe_a * safe_b), 0.0)

    def back(g):
        g = np.atleast_1d(g) * ok
        inv = 1.0 / (safe_a * safe_b)
        ga = g[:, None] * (B * inv[:, None] - A * (c / safe_a**2)[:, None])
        gb = g[:, None] * (A * inv[:, None] - B * (c / safe_b**2)[:, None])
        return ga.reshape(a.shape), gb.reshape(b.shape)

    out = c[0] if a.ndim == 1 else c
    return _node(out, (a, b), back, "cosine_sim")


def _segment_starts(seg):
    if len(seg) and (np.diff(seg) < 0).any():
        raise ValueError("segment ids must be sorted")
    return np.flatnonzero(np.r_[True, seg[1:] != seg[:-1]]) if len(seg) else np.empty(0, int)


def _segsum(x, seg, nseg, starts):
    out = np.zeros((nseg,) + x.shape[1:])
    if len(seg):
        out[seg[starts]] = np.add.reduceat(x, starts, axis=0)
    return out


def segment_sum(x, seg, nseg):
    """Sum rows of ``x`` into ``nseg`` buckets; empty buckets are zero."""
    x = as_tensor(x)
    seg = np.asarray(seg, dtype=np.int64)
    starts = _segment_starts(seg)
    out = _segsum(x.data, seg, nseg, starts)
    return _node(out, (x,), lambda g: (g[seg],), "segment_sum")


def segment_softmax(e, seg, nseg):
    """Softmax of a score vector within each segment."""
    e = as_tensor(e)
    seg = np.asarray(seg, dtype=np.int64)
    starts = _segment_starts(seg)
    mx = np.zeros(nseg)
    if len(seg):
        mx[seg[starts]] = np.maximum.reduceat(e.data, starts)
    ex = np.exp(e.data - mx[seg])
    den = _segsum(ex, seg, nseg, starts)
    s = ex / den[seg]

    def back(g):
        dot = _segsum(g * s, seg, nseg, starts)
        return (s * (g - dot[seg]),)

    return _node(s, (e,), back, "segment_softmax")


# -- loss ------------------------------------------------------------------


def log_softmax_rows(x):
    z = x - x.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels):
    """Summed ``-log softmax(logits)[label]`` over rows (fused, max-shifted)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or len(labels) != logits.shape[0]:
        raise ShapeError(f"cross_entropy: logits {logits.shape}, labels {labels.shape}")
    if len(labels) == 0:
        raise ValueError("cross_entropy over an empty labeled set")
    lsm = log_softmax_rows(logits.data)
    rows = np.arange(len(labels))
    loss = -lsm[rows, labels].sum()

    def back(g):
        d = np.exp(lsm)
        d[rows, labels] -= 1.0
        return (g * d,)

    return _node(loss, (logits,), back, "cross_entropy")


# -- driver ----------------------------------------------------------------


def backward(loss):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable tensor."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("loss is not finite")
    nodes, seen, stack = [], set(), [loss]
    while stack:
        t = stack.pop()
        if t._id in seen or not t.requires_grad:
            continue
        seen.add(t._id)
        nodes.append(t)
        stack.extend(t._parents)
    nodes.sort(key=lambda t: t._id, reverse=True)
    grads = {loss._id: np.ones_like(loss.data)}
    for t in nodes:
        g = grads.pop(t._id, None)
        if g is None:
            continue
        t.grad = g if t.grad is None else t.grad + g
        if t._backward is None:
            continue
        for p, pg in zip(t._parents, t._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            grads[p._id] = pg if p._id not in grads else grads[p._id] + pg


def zero_grad(params):
    for p in params:
        p.grad = None


# -- gradient checking -----------------------------------------------------


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_err: float
    checked: int
    skipped: int
    worst: list = field(default_factory=list)

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag} max_rel_err={self.max_rel_err:.3g} checked={self.checked} "
                f"skipped={self.skipped}")


def rel_error(a, n, floor=0.0):
    """``|a - n| / max(|a|, |n|, floor)``; 0 when both are exactly 0."""
    den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    diff = np.abs(a - n)
    return np.divide(diff, den, out=np.zeros_like(diff), where=den > 0)


def grad_check(f, inputs, step=1e-6, tol=1e-5, floor=0.0, names=None, n_worst=5):
    """Compare analytic gradients of scalar ``f(*inputs)`` with central differences.

    ``inputs`` is a Tensor or a list of Tensors; their ``data`` is perturbed in
    place and restored.  Elements whose evaluations touch a guarded region
    (e.g. cosine of a zero vector) are reported as skipped, not compared.
    """
    global guard_hits
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    inputs = list(inputs)
    names = names or [t.name or f"input{i}" for i, t in enumerate(inputs)]
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    guard_hits = 0
    out = f(*inputs)
    base_guarded = guard_hits > 0
    backward(out)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    errs, checked, skipped = [], 0, 0
    for name, t, ga in zip(names, inputs, analytic):
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            guard_hits = 0
            flat[i] = orig + step
            fp = float(f(*inputs).data)
            flat[i] = orig - step
            fm = float(f(*inputs).data)
            flat[i] = orig
            if base_guarded or guard_hits:
                skipped += 1
                continue
            num = (fp - fm) / (2 * step)
            a = ga.reshape(-1)[i]
            r = float(rel_error(np.array(a), np.array(num), floor))
            idx = tuple(int(j) for j in np.unravel_index(i, t.shape))
            errs.append((r, name, idx, float(a), num))
            checked += 1
    guard_hits = 0
    errs.sort(key=lambda e: -e[0])
    max_err = errs[0][0] if errs else 0.0
    return GradCheckReport(max_err <= tol, max_err, checked, skipped, errs[:n_worst])
