from types import SimpleNamespace

import numpy as np
import pytest

import scaffoldnet.layers as layers
import scaffoldnet.trainer as trainer_mod
from scaffoldnet import metrics
from scaffoldnet.data import AugmentConfig, DatasetSplit, Sample
from scaffoldnet.network import ConvParams, DenseParams, Network, init_network
from scaffoldnet.synthetic import CATEGORIES
from scaffoldnet.tensor import RngStream
from scaffoldnet.trainer import (
    EpochRecord,
    History,
    TrainConfig,
    TrainingError,
    category_for,
    evaluate,
    gradient_check,
    predict,
    relative_error,
    resolve_split,
    train,
)


def tiny_split(n_train=4, n_val=2):
    rng = np.random.default_rng(0)

    def mk(n):
        return [Sample(rng.random((128, 128, 1)).astype(np.float32), i % 2) for i in range(n)]

    return DatasetSplit(mk(n_train), mk(n_val), mk(2), seed=0)


def stub_evaluator(losses):
    calls = iter(losses)

    def evaluator(net, samples):
        loss = next(calls)
        return metrics.EvalResult(0.5, loss, None, metrics.Confusion(1, 1, 0, 0), np.zeros(2), np.zeros(2))

    return evaluator


# --------------------------------------------------------- checkpointing


def test_best_epoch_follows_lowest_validation_loss():
    snapshots = {}
    cfg = TrainConfig(epochs=3, batch_size=4, augment=None)
    best, hist = train(cfg, tiny_split(), evaluator=stub_evaluator([0.5, 0.3, 0.4]),
                       on_epoch_end=lambda e, net: snapshots.__setitem__(e, net.copy()))
    assert hist.best_epoch == 2
    assert len(hist.records) == 3
    for p, q in zip(best.params(), snapshots[2].params()):
        assert p.tobytes() == q.tobytes()
    # training went on after epoch 2 without touching the snapshot
    assert any(not np.array_equal(p, q) for p, q in zip(best.params(), snapshots[3].params()))


def test_ties_keep_earliest_epoch():
    cfg = TrainConfig(epochs=3, batch_size=4, augment=None)
    _, hist = train(cfg, tiny_split(), evaluator=stub_evaluator([0.4, 0.2, 0.2]))
    assert hist.best_epoch == 2


def test_non_finite_loss_reports_position():
    net = init_network(RngStream(0))
    net.denses[1].bias[:] = np.nan
    with pytest.raises(TrainingError, match="epoch 1, batch 0"):
        train(TrainConfig(epochs=1, batch_size=4, augment=None), tiny_split(), net=net)


def test_training_is_deterministic():
    cfg = TrainConfig(epochs=2, batch_size=2, seed=5)
    a, ha = train(cfg, tiny_split())
    b, hb = train(cfg, tiny_split())
    assert ha.to_csv() == hb.to_csv()
    for p, q in zip(a.params(), b.params()):
        assert p.tobytes() == q.tobytes()


def test_history_csv():
    h = History([EpochRecord(1, 0.69314718, 0.5, 0.75), EpochRecord(2, 0.4, 0.123456789, 1.0)], best_epoch=2)
    assert h.to_csv().splitlines() == [
        "epoch,train_loss,val_loss,val_accuracy",
        "1,0.693147,0.5,0.75",
        "2,0.4,0.123457,1",
        "# best_epoch=2",
    ]


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(n_train=3).counts(10)
    assert TrainConfig().counts(1241) == (993, 124, 124)
    assert TrainConfig(n_train=995, n_val=123, n_test=123).counts(1241) == (995, 123, 123)
    assert TrainConfig().augment == AugmentConfig()


def test_resolve_split(small_dataset):
    s = resolve_split(TrainConfig(dataset_root=str(small_dataset), categories=CATEGORIES,
                                  n_train=16, n_val=4, n_test=4))
    assert (len(s.train), len(s.validation), len(s.test)) == (16, 4, 4)
    assert all(x.image is not None for x in s.train)
    with pytest.raises(TrainingError):
        resolve_split(TrainConfig())


# ------------------------------------------------------------ evaluation


def test_evaluate_forced_extremes(monkeypatch):
    # label-1 images are bright on the left, label-0 on the right
    samples = []
    for i in range(6):
        img = np.zeros((128, 128, 1), np.float32)
        if i % 2:
            img[:, :64] = 1
        else:
            img[:, 64:] = 1
        samples.append(Sample(img, i % 2))

    def forced(net, batch, train=False, rng=None):
        side = batch[:, :, :64].mean(axis=(1, 2, 3)) - batch[:, :, 64:].mean(axis=(1, 2, 3))
        return SimpleNamespace(logits=40.0 * np.sign(side)[:, None])

    monkeypatch.setattr(trainer_mod, "network_forward", forced)
    res = evaluate(None, samples)
    assert res.accuracy == 1.0 and res.auc == 1.0 and res.loss < 1e-6
    assert res.confusion == (3, 0, 3, 0) and res.n == 6


def test_evaluate_untrained_is_chance_and_pure(small_dataset):
    from scaffoldnet.data import load_samples, scan_dataset

    samples = load_samples(scan_dataset(small_dataset, CATEGORIES))
    net = init_network(RngStream(3))
    a = evaluate(net, samples)
    b = evaluate(net, samples)
    assert abs(a.accuracy - 0.5) <= 0.15
    assert a.accuracy == b.accuracy and a.loss == b.loss and np.array_equal(a.scores, b.scores)
    assert 0 <= a.auc <= 1


def test_evaluate_single_category_and_empty():
    split = tiny_split()
    only_ones = [s for s in split.train if s.label == 1]
    assert evaluate(init_network(RngStream(0)), only_ones).auc is None
    with pytest.raises(ValueError):
        evaluate(init_network(RngStream(0)), [])


# ------------------------------------------------------------ prediction


def test_category_mapping():
    assert category_for(0.01) == "MDA-MB-468"
    assert category_for(0.99) == "MCF7"
    assert category_for(0.5) == "MCF7"
    assert category_for(0.2, ("x", "y")) == "x"


def test_predict_on_file(small_dataset):
    path = next((small_dataset / CATEGORIES[0]).glob("*.pgm"))
    p, name = predict(init_network(RngStream(1)), path, CATEGORIES)
    assert 0 < p < 1
    assert name == CATEGORIES[int(p >= 0.5)]


# -------------------------------------------------------- gradient check


def test_relative_error_guard():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, 2.0) == 0.5


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_check_passes(seed):
    assert gradient_check(seed) < 1e-4


def test_gradient_check_detects_transposed_dense_backward(monkeypatch):
    real = layers.dense_backward

    def transposed(cache, dy):
        dx, dw, db = real(cache, dy)
        x, _ = cache
        return dx, (dy.T @ x).reshape(dw.shape), db

    monkeypatch.setattr(layers, "dense_backward", transposed)
    assert gradient_check(0) > 1e-2


def test_gradient_check_zero_network():
    def zero_net():
        convs = [ConvParams(np.zeros((3, 3, ci, co)), np.zeros(co)) for ci, co in ((1, 4), (4, 4), (4, 8))]
        denses = [DenseParams(np.zeros((8, 4)), np.zeros(4)), DenseParams(np.zeros((4, 1)), np.zeros(1))]
        return Network(convs, denses, 16, 0.0)

    err = gradient_check(net=zero_net(), inputs=np.zeros((2, 16, 16, 1)))
    assert np.isfinite(err) and err < 1e-4
