"""Training and inference for the per-frame contact classifier."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .features import N_FEATURES, MotionFeatures, extract_features  # noqa: F401  (re-exported)
from .metrics import frame_accuracy
from .network import (  # noqa: F401  (re-exported)
    AdamState,
    ModelConfig,
    SeqModel,
    adam_step,
    backward,
    bce_loss,
    class_weights,
    forward,
    load_checkpoint,
    loss_and_grad,
    predict_proba,
    save_checkpoint,
)

CURVE_COLUMNS = ("iteration", "loss", "val_frame_acc")


@dataclass
class TrainConfig:
    n_iter: int = 2000
    max_crop_len: int = 105
    lr: float = 3e-4
    class_weighting: str = "balanced"
    eval_every: int = 200
    seed: int = 0

    def problems(self):
        out = []
        if self.n_iter < 0:
            out.append("n_iter must be >= 0")
        if self.max_crop_len < 2:
            out.append("max_crop_len must be >= 2")
        if self.lr < 0:
            out.append("lr must be >= 0")
        if self.class_weighting not in ("balanced", "none"):
            out.append("class_weighting must be 'balanced' or 'none'")
        if self.eval_every < 1:
            out.append("eval_every must be >= 1")
        return out

    def __post_init__(self):
        bad = self.problems()
        if bad:
            raise ValueError("; ".join(bad))


def has_labels(y) -> bool:
    y = np.asarray(y)
    return bool(((y == 0) | (y == 1)).any())


def crop(x, y, max_len, rng):
    """Random window of at most ``max_len`` frames."""
    T = len(y)
    if T <= max_len:
        return x, y
    s = int(rng.integers(0, T - max_len + 1))
    return x[s:s + max_len], y[s:s + max_len]


class Trainer:
    """Single-track Adam steps on one model with a persistent optimizer state."""

    def __init__(self, model: SeqModel, cfg: TrainConfig, weights=(1.0, 1.0), rng=None):
        self.model = model
        self.cfg = cfg
        self.adam = AdamState.for_model(model, lr=cfg.lr)
        self.rng = np.random.default_rng(cfg.seed if rng is None else rng)
        self.weights = tuple(weights)
        self.iteration = 0
        self.skipped = 0

    def step(self, x, y, weights=None):
        """One update on a random crop; returns the loss, or None for a skipped crop."""
        self.iteration += 1
        xc, yc = crop(x, y, self.cfg.max_crop_len, self.rng)
        w = self.weights if weights is None else weights
        loss, grads, used = loss_and_grad(self.model, xc, yc, w)
        if not used:
            self.skipped += 1
            return None
        adam_step(self.model, grads, self.adam)
        return loss

    def epoch(self, X, Y, weights=None):
        """Visit tracks in a seeded random order; returns the mean loss of used steps."""
        order = self.rng.permutation(len(X))
        losses = [loss for i in order if (loss := self.step(X[i], Y[i], weights)) is not None]
        return math.fsum(losses) / len(losses) if losses else float("nan")


def predict_track(model: SeqModel, feats):
    """Contact probabilities and hard labels (contact iff p >= 0.5)."""
    p = predict_proba(model, feats)
    return p, (p >= 0.5).astype(np.int8)


def partial_frame_accuracy(pred, labels):
    """Balanced accuracy over the labelled frames only; None if there are none."""
    labels = np.asarray(labels)
    mask = labels >= 0
    if not mask.any():
        return None
    return frame_accuracy(np.asarray(pred)[mask], labels[mask])


def dataset_accuracy(model, X, Y) -> float:
    scores = [partial_frame_accuracy(predict_track(model, x)[1], y) for x, y in zip(X, Y)]
    scores = [s for s in scores if s is not None]
    return math.fsum(scores) / len(scores) if scores else float("nan")


def _check_data(X, Y, n_features):
    if len(X) == 0:
        raise ValueError("empty dataset")
    if len(X) != len(Y):
        raise ValueError(f"{len(X)} feature sequences but {len(Y)} label sequences")
    for k, (x, y) in enumerate(zip(X, Y)):
        if np.ndim(x) != 2 or np.shape(x)[1] != n_features:
            raise ValueError(f"sequence {k}: features must be (T, {n_features})")
        if len(x) != len(y):
            raise ValueError(f"sequence {k}: {len(x)} feature rows but {len(y)} labels")
        if not np.all(np.isfinite(x)):
            raise ValueError(f"sequence {k}: non-finite features")
    if not any(has_labels(y) for y in Y):
        raise ValueError("dataset has no labelled frames")


def train(model: SeqModel, X, Y, cfg: TrainConfig, X_val=None, Y_val=None):
    """Fit ``model`` in place for ``cfg.n_iter`` track iterations.

    Returns the best-on-validation copy (the final one without validation data)
    and the loss curve as a list of dicts with ``CURVE_COLUMNS`` keys.
    """
    _check_data(X, Y, model.cfg.n_features)
    trainer = Trainer(model, cfg, class_weights(Y, cfg.class_weighting))
    best, best_acc = model.copy(), -math.inf
    curve, window = [], []
    order = []
    while trainer.iteration < cfg.n_iter:
        if not order:
            order = list(trainer.rng.permutation(len(X)))
        i = order.pop(0)
        loss = trainer.step(X[i], Y[i])
        if loss is not None:
            window.append(loss)
        if trainer.iteration % cfg.eval_every == 0 or trainer.iteration == cfg.n_iter:
            row = {"iteration": trainer.iteration,
                   "loss": math.fsum(window) / len(window) if window else float("nan"),
                   "val_frame_acc": float("nan")}
            window = []
            if X_val is not None:
                acc = dataset_accuracy(model, X_val, Y_val)
                row["val_frame_acc"] = acc
                if acc > best_acc:
                    best, best_acc = model.copy(), acc
            curve.append(row)
    if X_val is None or best_acc == -math.inf:
        best = model.copy()
    return best, curve


def write_curve(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for row in curve:
            w.writerow([row["iteration"]] + [format_float(row[k]) for k in CURVE_COLUMNS[1:]])


def format_float(v) -> str:
    """Fixed formatting so CSV outputs compare byte for byte."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{float(v):.6f}"


class ContactClassifier(ClassifierMixin, BaseEstimator):
    """Bidirectional LSTM frame classifier over (T, n_features) sequences.

    ``X`` is a list of per-track feature matrices and ``y`` a list of label
    arrays with 0, 1 or -1 (unlabelled, ignored by the loss).
    """

    def __init__(self, hidden_size=64, n_layers=2, encoder_size=64, head_sizes=(64, 32),
                 lr=3e-4, n_iter=2000, max_crop_len=105, class_weight="balanced",
                 eval_every=200, random_state=0):
        self.hidden_size = hidden_size
        self.n_layers = n_layers
        self.encoder_size = encoder_size
        self.head_sizes = head_sizes
        self.lr = lr
        self.n_iter = n_iter
        self.max_crop_len = max_crop_len
        self.class_weight = class_weight
        self.eval_every = eval_every
        self.random_state = random_state

    def model_config(self, n_features) -> ModelConfig:
        return ModelConfig(n_features, self.encoder_size, self.hidden_size, self.n_layers,
                           tuple(self.head_sizes))

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.n_iter, self.max_crop_len, self.lr, self.class_weight,
                           self.eval_every, self._seeds()[1])

    def _seeds(self):
        seed = 0 if self.random_state is None else int(self.random_state)
        init, order = np.random.SeedSequence(seed).generate_state(2)
        return int(init), int(order)

    def fit(self, X, y, X_val=None, y_val=None):
        X = [np.asarray(x, dtype=np.float64) for x in X]
        if not X:
            raise ValueError("empty dataset")
        self.n_features_in_ = X[0].shape[1]
        self.classes_ = np.array([0, 1])
        model = SeqModel(self.model_config(self.n_features_in_), seed=self._seeds()[0])
        self.model_, self.curve_ = train(model, X, list(y), self.train_config(), X_val, y_val)
        return self

    def decision_function(self, X):
        return [forward(self.model_, x) for x in X]

    def predict_proba(self, X):
        """One (T, 2) array of [P(no contact), P(contact)] per sequence."""
        out = []
        for x in X:
            p = predict_proba(self.model_, x)
            out.append(np.column_stack([1.0 - p, p]))
        return out

    def predict(self, X):
        return [predict_track(self.model_, x)[1] for x in X]

    def score(self, X, y, sample_weight=None):
        """Mean balanced frame accuracy over sequences (labelled frames only)."""
        return dataset_accuracy(self.model_, X, y)
