import numpy as np
import pytest

import shgnn.autodiff as ad
from shgnn.config import ConfigError, TrainConfig
from shgnn.model import SHGNN
from shgnn.synth import planted_dataset, random_hetero_graph
from shgnn.train import AdamState, DivergenceError, adam_step, fit, predict


def test_zero_gradient_leaves_parameters():
    p = {"w": np.array([1.0, -2.0])}
    st = AdamState.for_params({"w": ad.Tensor(p["w"])})
    adam_step(p, {"w": np.zeros(2)}, st, lr=0.1)
    assert p["w"].tolist() == [1.0, -2.0]


def test_first_step_moves_by_lr():
    p = {"w": np.array([1.0, 1.0, 1.0])}
    st = AdamState.for_params({"w": ad.Tensor(p["w"])})
    adam_step(p, {"w": np.array([0.3, -5.0, 1e-3])}, st, lr=0.01)
    np.testing.assert_allclose(p["w"], [0.99, 1.01, 0.99], rtol=0, atol=1e-7)


def test_adam_minimises_parabola():
    x = {"x": np.array([0.0])}
    st = AdamState.for_params({"x": ad.Tensor(x["x"])})
    for _ in range(100):
        adam_step(x, {"x": 2 * (x["x"] - 5.0)}, st, lr=0.1)
    assert abs(x["x"][0] - 5.0) < 0.5


def test_gradient_shape_mismatch():
    p = {"w": np.zeros(2)}
    st = AdamState.for_params({"w": ad.Tensor(p["w"])})
    with pytest.raises(ValueError, match="shape"):
        adam_step(p, {"w": np.zeros(3)}, st, lr=0.1)


def test_zero_learning_rate_is_a_no_op():
    ds = random_hetero_graph(0)
    cfg = TrainConfig(d1=4, epochs=5, learning_rate=0.0)
    before = SHGNN(ds.graph, cfg).param_vector()
    after = fit(ds, cfg).model.param_vector()
    assert all(before[k].tobytes() == after[k].tobytes() for k in before)


def test_training_is_reproducible():
    ds = random_hetero_graph(1)
    cfg = TrainConfig(d1=4, epochs=15, layers=2, seed=4)
    a, b = fit(ds, cfg), fit(ds, cfg)
    assert a.log_jsonl() == b.log_jsonl()
    pa, pb = a.model.param_vector(), b.model.param_vector()
    assert all(pa[k].tobytes() == pb[k].tobytes() for k in pa)


@pytest.mark.parametrize("seed", range(20))
def test_small_step_lowers_training_loss(seed):
    ds = random_hetero_graph(seed)
    model = SHGNN(ds.graph, TrainConfig(d1=4, seed=seed, layers=2))
    train = ds.splits["train"]
    out = model.forward()
    loss = model.loss(out, train)
    ad.backward(loss)
    for p in model.params.values():
        if p.grad is not None:
            p.data -= 1e-4 * p.grad
    assert model.loss(model.forward(), train).item() < loss.item()


def test_best_validation_epoch_is_restored():
    ds = random_hetero_graph(2)
    cfg = TrainConfig(d1=4, epochs=60, patience=5, learning_rate=0.05)
    res = fit(ds, cfg)
    val = [r["val_loss"] for r in res.log]
    assert res.best_epoch == 1 + int(np.argmin(val))
    # stopped exactly `patience` epochs after the best one (or ran out)
    assert len(res.log) == min(cfg.epochs, res.best_epoch + cfg.patience)
    restored = res.model.loss(res.model.forward(), ds.splits["validation"]).item()
    assert restored == pytest.approx(min(val), rel=1e-12)


def test_patience_zero_runs_all_epochs():
    ds = random_hetero_graph(2)
    res = fit(ds, TrainConfig(d1=4, epochs=25, patience=0, learning_rate=0.05))
    assert len(res.log) == 25


def test_log_fields():
    ds = random_hetero_graph(0)
    res = fit(ds, TrainConfig(d1=4, epochs=2))
    assert set(res.log[0]) == {"epoch", "train_loss", "train_acc", "val_loss", "val_acc"}


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_names_a_parameter():
    ds = random_hetero_graph(0)
    with pytest.raises(DivergenceError, match=r"epoch 1: .*(Wx|Wz|Wh|Wo|q|b)/"):
        fit(ds, TrainConfig(d1=4, epochs=3, learning_rate=1e308))


def test_config_validation():
    with pytest.raises(ConfigError, match="unknown"):
        TrainConfig.from_dict({"d1": 4, "dropout": 0.5})
    with pytest.raises(ConfigError):
        TrainConfig(d1=0)
    with pytest.raises(ConfigError):
        TrainConfig(centrality_bucketing="sqrt")


def test_config_round_trip(tmp_path):
    cfg = TrainConfig(d1=8, metapaths=[("M", "A", "M")])
    (tmp_path / "c.json").write_text(cfg.to_json())
    back = TrainConfig.load(tmp_path / "c.json")
    assert back == cfg and back.metapaths == ["M-A-M"] and back.digest() == cfg.digest()


@pytest.mark.slow
def test_planted_training_fits():
    ds = planted_dataset(0)
    res = fit(ds, TrainConfig(d1=32, epochs=200, patience=0))
    train = ds.splits["train"]
    acc = (predict(res.model, train) == ds.graph.labels[train]).mean()
    assert acc >= 0.95
