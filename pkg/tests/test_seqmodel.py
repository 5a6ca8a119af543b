import math

import numpy as np
import pytest
from sklearn.base import clone

from handcontact.network import ModelConfig, SeqModel
from handcontact.seqmodel import (
    ContactClassifier,
    TrainConfig,
    Trainer,
    crop,
    dataset_accuracy,
    predict_track,
    train,
    write_curve,
)

SMALL = ModelConfig(n_features=3, encoder_size=8, hidden_size=8, n_layers=1, head_sizes=(8,))


def separable(n_tracks=12, T=30, seed=0):
    """Label is the sign of feature 0; the other features are noise."""
    rng = np.random.default_rng(seed)
    X, Y = [], []
    for _ in range(n_tracks):
        x = rng.normal(size=(T, 3))
        x[:, 0] = np.where(rng.random(T) < 0.5, -1.0, 1.0) * rng.uniform(0.5, 2.0, T)
        X.append(x)
        Y.append((x[:, 0] > 0).astype(np.int8))
    return X, Y


def test_separable_reaches_099():
    X, Y = separable()
    best, curve = train(SeqModel(SMALL, seed=0), X, Y, TrainConfig(n_iter=300, lr=1e-2, eval_every=50))
    assert dataset_accuracy(best, X, Y) >= 0.99
    assert all(math.isfinite(r["loss"]) for r in curve)


def test_lr_zero_keeps_parameters():
    X, Y = separable(4)
    model = SeqModel(SMALL, seed=1)
    before = model.flat.copy()
    best, _ = train(model, X, Y, TrainConfig(n_iter=20, lr=0.0, eval_every=10))
    assert np.array_equal(model.flat, before)
    assert np.array_equal(best.flat, before)


def test_training_is_deterministic():
    X, Y = separable(4)
    a, ca = train(SeqModel(SMALL, seed=2), X, Y, TrainConfig(n_iter=30, eval_every=10, seed=5))
    b, cb = train(SeqModel(SMALL, seed=2), X, Y, TrainConfig(n_iter=30, eval_every=10, seed=5))
    assert np.array_equal(a.flat, b.flat)
    assert [r["loss"] for r in ca] == [r["loss"] for r in cb]


def test_best_on_validation_is_selected():
    X, Y = separable(6)
    model = SeqModel(SMALL, seed=0)
    best, curve = train(model, X, Y, TrainConfig(n_iter=200, lr=1e-2, eval_every=20), X[:2], Y[:2])
    accs = [r["val_frame_acc"] for r in curve]
    assert dataset_accuracy(best, X[:2], Y[:2]) == max(accs)


def test_train_rejects_empty_and_unlabelled():
    with pytest.raises(ValueError):
        train(SeqModel(SMALL), [], [], TrainConfig(n_iter=1))
    with pytest.raises(ValueError, match="no labelled"):
        train(SeqModel(SMALL), [np.zeros((4, 3))], [np.full(4, -1)], TrainConfig(n_iter=1))


def test_trainer_skips_unlabelled_crop():
    t = Trainer(SeqModel(SMALL), TrainConfig())
    before = t.model.flat.copy()
    assert t.step(np.zeros((5, 3)), np.full(5, -1)) is None
    assert t.skipped == 1
    assert np.array_equal(t.model.flat, before)


def test_crop_bounds():
    rng = np.random.default_rng(0)
    x, y = np.arange(300).reshape(150, 2), np.arange(150)
    for _ in range(20):
        xc, yc = crop(x, y, 105, rng)
        assert len(xc) == len(yc) == 105
        assert np.array_equal(xc[:, 0] // 2, yc)
    assert crop(x[:10], y[:10], 105, rng)[1].size == 10


def test_prediction_independent_of_other_tracks():
    X, _ = separable(3)
    model = SeqModel(SMALL, seed=3)
    alone = predict_track(model, X[1])[0]
    for x in (X[0], X[2]):
        predict_track(model, x)
    assert np.array_equal(predict_track(model, X[1])[0], alone)


def test_curve_csv(tmp_path):
    write_curve([{"iteration": 10, "loss": 0.5, "val_frame_acc": float("nan")}], tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text() == "iteration,loss,val_frame_acc\n10,0.500000,\n"


def test_estimator_api():
    X, Y = separable(8)
    clf = ContactClassifier(hidden_size=8, encoder_size=8, n_layers=1, head_sizes=(8,),
                            lr=1e-2, n_iter=200, eval_every=50, random_state=0)
    assert clone(clf).get_params() == clf.get_params()
    clf.fit(X, Y)
    proba = clf.predict_proba(X[:2])
    assert proba[0].shape == (30, 2)
    np.testing.assert_allclose(proba[0].sum(axis=1), 1.0)
    assert [p.shape for p in clf.predict(X[:2])] == [(30,), (30,)]
    assert clf.score(X, Y) >= 0.95
    again = clone(clf).fit(X, Y)
    assert np.array_equal(again.model_.flat, clf.model_.flat)


def test_train_config_validation():
    with pytest.raises(ValueError, match="max_crop_len"):
        TrainConfig(max_crop_len=1)
