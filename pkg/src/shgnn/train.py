"""Full-batch Adam training with validation-loss model selection."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .model import SHGNN

log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    pass


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kw):
        return cls({k: np.zeros_like(p.data) for k, p in params.items()},
                   {k: np.zeros_like(p.data) for k, p in params.items()}, **kw)


def adam_step(params, grads, state, lr, weight_decay=0.0):
    """One bias-corrected Adam update, in place on ``params[k].data``.

    ``params`` maps name -> Tensor (or ndarray), ``grads`` name -> ndarray;
    missing gradients count as zero.
    """
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1**state.step, 1.0 - b2**state.step
    for k, p in params.items():
        data = p.data if isinstance(p, ad.Tensor) else p
        g = grads.get(k)
        g = np.zeros_like(data) if g is None else np.asarray(g)
        if g.shape != data.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, parameter {data.shape}")
        if weight_decay:
            g = g + weight_decay * data
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        data -= lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + state.eps)
    return params


@dataclass
class TrainResult:
    model: SHGNN
    best_epoch: int
    log: list = field(default_factory=list)

    def log_jsonl(self):
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.log)


def accuracy(probs, labels):
    return float((probs.argmax(axis=1) == labels).mean()) if len(labels) else 0.0


def fit(dataset, config=None, model=None):
    """Train an :class:`SHGNN` on ``dataset.splits['train']``.

    After every epoch the validation loss is computed with the updated
    parameters; the parameters of the epoch with the lowest validation loss
    are restored at the end.  Training stops once the validation loss has not
    improved for ``patience`` epochs (``patience=0`` disables early stopping).
    """
    config = config or TrainConfig()
    g, splits = dataset.graph, dataset.splits
    model = model or SHGNN(g, config)
    train_idx = splits["train"]
    val_idx = splits.get("validation", np.empty(0, dtype=np.int64))
    if len(train_idx) == 0:
        raise ValueError("training split is empty")
    params = model.params
    state = AdamState.for_params(params)

    def evaluate(out, nodes):
        if len(nodes) == 0:
            return float("nan"), float("nan")
        probs = out.probs[model.local_index(nodes)]
        y = g.labels[nodes]
        return float(model.loss(out, nodes).data), accuracy(probs, y)

    best = (np.inf, 0, model.param_vector())
    history = []
    since_best = 0
    for epoch in range(1, config.epochs + 1):
        ad.zero_grad(params.values())
        out = model.forward()
        loss = model.loss(out, train_idx)
        if not np.isfinite(loss.data):
            raise DivergenceError(f"epoch {epoch}: training loss is {loss.data}")
        ad.backward(loss)
        grads = {k: p.grad for k, p in params.items()}
        bad = [k for k, gr in grads.items() if gr is not None and not np.isfinite(gr).all()]
        if bad:
            raise DivergenceError(f"epoch {epoch}: non-finite gradient in {bad[0]}")
        train_acc = accuracy(out.probs[model.local_index(train_idx)], g.labels[train_idx])
        adam_step(params, grads, state, config.learning_rate, config.weight_decay)
        if any(not np.isfinite(p.data).all() for p in params.values()):
            worst = max(grads, key=lambda k: -1 if grads[k] is None else np.abs(grads[k]).max())
            raise DivergenceError(f"epoch {epoch}: parameters diverged; largest gradient in {worst}")

        post = model.forward()
        val_loss, val_acc = evaluate(post, val_idx) if len(val_idx) else (float(loss.data), train_acc)
        if not np.isfinite(val_loss):
            worst = max(grads, key=lambda k: -1 if grads[k] is None else np.abs(grads[k]).max())
            raise DivergenceError(f"epoch {epoch}: validation loss is {val_loss}; "
                                  f"largest gradient in {worst}")
        history.append({"epoch": epoch, "train_loss": float(loss.data), "train_acc": train_acc,
                        "val_loss": val_loss, "val_acc": val_acc})
        log.debug("epoch %d train %.4f val %.4f acc %.3f", epoch, loss.data, val_loss, val_acc)
        if val_loss < best[0]:
            best = (val_loss, epoch, model.param_vector())
            since_best = 0
        else:
            since_best += 1
            if config.patience and since_best >= config.patience:
                break
    model.load_param_values(best[2])
    return TrainResult(model, best[1], history)


def predict(model, nodes=None):
    """Class predictions for basic-type ``nodes`` (all if None)."""
    probs = model.forward().probs
    if nodes is None:
        return probs.argmax(axis=1)
    return probs[model.local_index(nodes)].argmax(axis=1)
