"""Guided progressive label correction with a noisy and a clean model.

The noisy model ``f`` trains on the noisy labels, the clean model ``g`` on
labels it has confirmed.  A noisy label is overwritten by ``f``'s decision
only when the frame was labelled, ``f`` is confident within the current
threshold ``delta`` and ``g`` agrees.  ``delta`` loosens each round in which
few labels changed, and both models revisit the trusted set every ``m``
noisy-track iterations.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .network import AdamState, ModelConfig, SeqModel, class_weights, predict_proba
from .seqmodel import TrainConfig, Trainer, _check_data, dataset_accuracy, predict_track
from .trackdata import UNLABELED

HISTORY_COLUMNS = ("round", "delta", "flips", "labeled", "clean_labeled",
                   "skipped_unlabeled", "label_acc", "val_frame_acc")


@dataclass
class GplcConfig:
    delta0: float = 0.05
    delta_end: float = 0.25
    alpha: float = 0.01
    beta: float = 0.025
    m: int = 2500
    rounds: int = 10
    pretrain_f: int = 2000
    pretrain_g: int = 1000
    agreement: bool = True
    shared_optimizer: bool = True

    def problems(self):
        out = []
        if not 0 <= self.delta0 <= self.delta_end < 0.5:
            out.append("need 0 <= delta0 <= delta_end < 0.5")
        if not 0 < self.alpha < 1:
            out.append("alpha must lie in (0, 1)")
        if self.beta <= 0:
            out.append("beta must be > 0")
        if self.m < 1:
            out.append("m must be >= 1")
        if self.rounds < 0:
            out.append("rounds must be >= 0")
        if self.pretrain_f < 0 or self.pretrain_g < 0:
            out.append("pretrain budgets must be >= 0")
        return out

    def __post_init__(self):
        bad = self.problems()
        if bad:
            raise ValueError("; ".join(bad))


def correction_gate(labels, pf, pg, delta, agreement=True):
    """Frames eligible for rewriting: labelled, confident and (optionally) agreed."""
    labels = np.asarray(labels)
    pf = np.asarray(pf)
    gate = (labels == 0) | (labels == 1)
    gate &= np.abs(pf - 0.5) >= 0.5 - delta
    if agreement:
        gate &= (pf >= 0.5) == (np.asarray(pg) >= 0.5)
    return gate


def correction_pass(noisy, clean, pf, pg, delta, agreement=True):
    """Rewrite gated frames of one track in place; returns (flips, skipped_unlabelled).

    ``flips`` counts frames whose noisy label changed value.
    """
    gate = correction_gate(noisy, pf, pg, delta, agreement)
    decision = (np.asarray(pf) >= 0.5).astype(noisy.dtype)
    before = noisy.copy()
    noisy[gate] = decision[gate]
    clean[gate] = decision[gate]
    # confident, agreed frames that the gate skipped only because they were unlabelled
    conf = np.abs(np.asarray(pf) - 0.5) >= 0.5 - delta
    if agreement:
        conf &= (np.asarray(pf) >= 0.5) == (np.asarray(pg) >= 0.5)
    skipped = int((conf & (noisy == UNLABELED)).sum())
    return int((noisy != before).sum()), skipped


def threshold_update(delta, flips, labeled, cfg: GplcConfig):
    """Loosen delta by beta when fewer than alpha * labeled frames flipped."""
    if flips < cfg.alpha * labeled:
        # rounding keeps repeated additions on the decimal grid (0.05 -> 0.075)
        return min(round(delta + cfg.beta, 12), cfg.delta_end)
    return delta


def n_labeled(Y):
    return int(sum(np.count_nonzero(np.asarray(y) >= 0) for y in Y))


@dataclass
class GplcResult:
    f: SeqModel
    g: SeqModel
    best: SeqModel
    noisy_labels: list
    clean_labels: list
    history: list = field(default_factory=list)
    deltas: list = field(default_factory=list)


def _label_accuracy(Y, truth):
    if truth is None:
        return float("nan")
    correct = total = 0
    for y, t in zip(Y, truth):
        y = np.asarray(y)
        mask = y >= 0
        correct += int((y[mask] == np.asarray(t)[mask]).sum())
        total += int(mask.sum())
    return correct / total if total else float("nan")


def run_gplc(X_noisy, Y_noisy, X_trusted, Y_trusted, cfg: GplcConfig, train_cfg: TrainConfig,
             model_cfg: ModelConfig | None = None, X_val=None, Y_val=None, truth=None,
             seed=0, on_round=None) -> GplcResult:
    """Run the correction loop and return both models and the corrected labels.

    ``truth`` (optional, aligned with the noisy set) only feeds the history's
    ``label_acc`` column.  Inputs are never modified.  With ``cfg.agreement``
    false the clean model is not consulted, which gives single-model PLC.
    """
    model_cfg = model_cfg or ModelConfig(n_features=np.shape(X_noisy[0])[1])
    _check_data(X_noisy, Y_noisy, model_cfg.n_features)
    _check_data(X_trusted, Y_trusted, model_cfg.n_features)
    noisy = [np.array(y, dtype=np.int8) for y in Y_noisy]
    clean = [np.full(len(y), UNLABELED, dtype=np.int8) for y in Y_noisy]
    trusted = [np.array(y, dtype=np.int8) for y in Y_trusted]

    ss = np.random.SeedSequence(seed)
    s_f, s_g, s_tf, s_tg, s_order = (int(v) for v in ss.generate_state(5))
    f = SeqModel(model_cfg, seed=s_f)
    g = SeqModel(model_cfg, seed=s_g)
    tf = Trainer(f, train_cfg, rng=s_tf)
    tg = Trainer(g, train_cfg, rng=s_tg)
    order_rng = np.random.default_rng(s_order)
    w_trusted = class_weights(trusted, train_cfg.class_weighting)

    # pretraining: f on noisy + trusted, g on trusted
    X_joint = list(X_noisy) + list(X_trusted)
    Y_joint = noisy + trusted
    w_joint = class_weights(Y_joint, train_cfg.class_weighting)
    _run_iterations(tf, X_joint, Y_joint, cfg.pretrain_f, w_joint)
    _run_iterations(tg, X_trusted, trusted, cfg.pretrain_g, w_trusted)

    best, best_acc = f.copy(), -math.inf
    if X_val is not None:
        best_acc = dataset_accuracy(f, X_val, Y_val)

    delta = cfg.delta0
    deltas = [delta]
    history = []
    labeled = n_labeled(noisy)
    history.append(_row(0, delta, 0, labeled, clean, 0, _label_accuracy(noisy, truth),
                        best_acc if X_val is not None else float("nan")))
    iteration = 0
    for rnd in range(1, cfg.rounds + 1):
        snapshot = [y.copy() for y in noisy]
        w_noisy = class_weights(noisy, train_cfg.class_weighting)
        w_clean = class_weights(clean + trusted, train_cfg.class_weighting)
        skipped = 0
        for i in order_rng.permutation(len(noisy)):
            x = X_noisy[i]
            pf = predict_proba(f, x)
            pg = predict_proba(g, x) if cfg.agreement else pf
            _, sk = correction_pass(noisy[i], clean[i], pf, pg, delta, cfg.agreement)
            skipped += sk
            tf.step(x, noisy[i], w_noisy)
            if cfg.agreement and (clean[i] >= 0).any():
                tg.step(x, clean[i], w_clean)
            iteration += 1
            if iteration % cfg.m == 0:
                _fine_tune(tf, X_trusted, trusted, w_trusted, cfg.shared_optimizer)
                if cfg.agreement:
                    _fine_tune(tg, X_trusted, trusted, w_trusted, cfg.shared_optimizer)
        flips = sum(int((a != b).sum()) for a, b in zip(noisy, snapshot))
        labeled = n_labeled(noisy)
        val_acc = float("nan")
        if X_val is not None:
            val_acc = dataset_accuracy(f, X_val, Y_val)
            if val_acc > best_acc:
                best, best_acc = f.copy(), val_acc
        row = _row(rnd, delta, flips, labeled, clean, skipped, _label_accuracy(noisy, truth), val_acc)
        history.append(row)
        delta = threshold_update(delta, flips, labeled, cfg)
        deltas.append(delta)
        if on_round is not None:
            on_round(row)
    if X_val is None:
        best = f.copy()
    return GplcResult(f, g, best, noisy, clean, history, deltas)


def _fine_tune(trainer, X, Y, weights, shared):
    """One epoch over the trusted set, optionally with fresh Adam moments."""
    if shared:
        return trainer.epoch(X, Y, weights)
    kept = trainer.adam
    trainer.adam = AdamState.for_model(trainer.model, lr=kept.lr)
    try:
        return trainer.epoch(X, Y, weights)
    finally:
        trainer.adam = kept


def _run_iterations(trainer, X, Y, n, weights):
    order = []
    for _ in range(n):
        if not order:
            order = list(trainer.rng.permutation(len(X)))
        i = order.pop(0)
        trainer.step(X[i], Y[i], weights)


def _row(rnd, delta, flips, labeled, clean, skipped, label_acc, val_acc):
    return {"round": rnd, "delta": delta, "flips": flips, "labeled": labeled,
            "clean_labeled": n_labeled(clean), "skipped_unlabeled": skipped,
            "label_acc": label_acc, "val_frame_acc": val_acc}


class GuidedLabelCorrection(ClassifierMixin, BaseEstimator):
    """Estimator wrapper around :func:`run_gplc`.

    ``fit(X, y, X_trusted=..., y_trusted=...)`` takes the noisy sequences as
    ``X``/``y``.  After fitting, ``labels_`` holds the corrected noisy labels,
    ``clean_labels_`` the confirmed ones and ``history_`` one dict per round.
    """

    def __init__(self, delta0=0.05, delta_end=0.25, alpha=0.01, beta=0.025, m=2500, rounds=10,
                 pretrain_f=2000, pretrain_g=1000, agreement=True, shared_optimizer=True, hidden_size=64, n_layers=2,
                 lr=3e-4, max_crop_len=105, class_weight="balanced", random_state=0):
        self.delta0 = delta0
        self.delta_end = delta_end
        self.alpha = alpha
        self.beta = beta
        self.m = m
        self.rounds = rounds
        self.pretrain_f = pretrain_f
        self.pretrain_g = pretrain_g
        self.agreement = agreement
        self.shared_optimizer = shared_optimizer
        self.hidden_size = hidden_size
        self.n_layers = n_layers
        self.lr = lr
        self.max_crop_len = max_crop_len
        self.class_weight = class_weight
        self.random_state = random_state

    def fit(self, X, y, X_trusted=None, y_trusted=None, X_val=None, y_val=None, truth=None):
        if X_trusted is None or y_trusted is None or len(X_trusted) == 0:
            raise ValueError("a non-empty trusted set is required")
        cfg = GplcConfig(self.delta0, self.delta_end, self.alpha, self.beta, self.m, self.rounds,
                         self.pretrain_f, self.pretrain_g, self.agreement, self.shared_optimizer)
        seed = 0 if self.random_state is None else int(self.random_state)
        tcfg = TrainConfig(n_iter=0, max_crop_len=self.max_crop_len, lr=self.lr,
                           class_weighting=self.class_weight, seed=seed)
        n_features = np.shape(X[0])[1]
        mcfg = ModelConfig(n_features=n_features, hidden_size=self.hidden_size, n_layers=self.n_layers)
        res = run_gplc(X, y, X_trusted, y_trusted, cfg, tcfg, mcfg, X_val, y_val, truth, seed)
        self.n_features_in_ = n_features
        self.classes_ = np.array([0, 1])
        self.model_ = res.best
        self.result_ = res
        self.labels_ = res.noisy_labels
        self.clean_labels_ = res.clean_labels
        self.history_ = res.history
        self.deltas_ = res.deltas
        return self

    def predict_proba(self, X):
        out = []
        for x in X:
            p = predict_proba(self.model_, x)
            out.append(np.column_stack([1.0 - p, p]))
        return out

    def predict(self, X):
        return [predict_track(self.model_, x)[1] for x in X]

    def score(self, X, y, sample_weight=None):
        return dataset_accuracy(self.model_, X, y)


def config_dict(cfg: GplcConfig):
    return asdict(cfg)
