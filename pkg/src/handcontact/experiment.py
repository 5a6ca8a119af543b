"""Training modes shared by the command line and the benchmark harness."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .features import extract_features
from .gplc import GplcConfig, run_gplc
from .motionlabel import PseudoLabelConfig
from .network import ModelConfig, SeqModel
from .parallel import map_ordered
from .seqmodel import TrainConfig, predict_track, train
from .trackdata import Dataset, mask_box_iou

MODES = ("supervised", "noisy_only", "joint", "plc", "gplc", "pseudo_labeling")


@dataclass
class Split:
    """Feature matrices with aligned labels (and optional planted truth)."""

    ids: list
    X: list
    labels: list
    truth: list | None = None
    tracks: list | None = None

    def __len__(self):
        return len(self.ids)

    def subset(self, idx):
        idx = list(idx)
        pick = lambda seq: None if seq is None else [seq[i] for i in idx]  # noqa: E731
        return Split(pick(self.ids), pick(self.X), pick(self.labels), pick(self.truth), pick(self.tracks))


def featurize(tracks, seed=0, threads=1, pseudo_cfg: PseudoLabelConfig | None = None):
    return map_ordered(lambda tr: extract_features(tr, pseudo_cfg, seed), tracks, threads)


def split_from_dataset(ds: Dataset, truth=None, seed=0, threads=1, pseudo_cfg=None) -> Split:
    X = featurize(ds.tracks, seed, threads, pseudo_cfg)
    return Split([t.id for t in ds.tracks], X, list(ds.labels), truth, list(ds.tracks))


@dataclass
class ModeResult:
    mode: str
    model: SeqModel
    curve: list = field(default_factory=list)
    history: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    corrected: list | None = None
    clean: list | None = None


def _union(*splits):
    X, Y = [], []
    for s in splits:
        X += list(s.X)
        Y += list(s.labels)
    return X, Y


def run_mode(mode, noisy: Split | None, trusted: Split | None, val: Split | None = None,
             model_cfg: ModelConfig | None = None, train_cfg: TrainConfig | None = None,
             gplc_cfg: GplcConfig | None = None, seed=0, on_round=None) -> ModeResult:
    """Train one of ``MODES`` and return the selected model.

    The single-model modes train for ``train_cfg.n_iter`` track iterations.
    ``gplc`` and ``plc`` use the budgets in ``gplc_cfg``; ``pseudo_labeling``
    trains a teacher on the trusted set for ``gplc_cfg.pretrain_g``
    iterations, relabels every noisy frame with it and trains a student on
    those labels plus the trusted set.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    train_cfg = train_cfg or TrainConfig()
    gplc_cfg = gplc_cfg or GplcConfig()
    base = noisy if noisy is not None else trusted
    if base is None or len(base) == 0:
        raise ValueError(f"mode {mode} needs training data")
    model_cfg = model_cfg or ModelConfig(n_features=np.shape(base.X[0])[1])
    tcfg = TrainConfig(train_cfg.n_iter, train_cfg.max_crop_len, train_cfg.lr,
                       train_cfg.class_weighting, train_cfg.eval_every, seed)
    Xv = val.X if val is not None and len(val) else None
    Yv = val.labels if Xv is not None else None

    def need(split, name):
        if split is None or len(split) == 0:
            raise ValueError(f"mode {mode} needs a non-empty {name} set")
        return split

    def fit(X, Y):
        model = SeqModel(model_cfg, seed=seed)
        return train(model, X, Y, tcfg, Xv, Yv)

    if mode == "supervised":
        best, curve = fit(*_union(need(trusted, "trusted")))
        return ModeResult(mode, best, curve)
    if mode == "noisy_only":
        best, curve = fit(*_union(need(noisy, "noisy")))
        return ModeResult(mode, best, curve)
    if mode == "joint":
        best, curve = fit(*_union(need(noisy, "noisy"), need(trusted, "trusted")))
        return ModeResult(mode, best, curve)
    if mode == "pseudo_labeling":
        need(noisy, "noisy")
        need(trusted, "trusted")
        teacher_cfg = TrainConfig(gplc_cfg.pretrain_g, tcfg.max_crop_len, tcfg.lr,
                                  tcfg.class_weighting, tcfg.eval_every, seed)
        teacher, _ = train(SeqModel(model_cfg, seed=seed), list(trusted.X), list(trusted.labels),
                           teacher_cfg, Xv, Yv)
        relabeled = [predict_track(teacher, x)[1] for x in noisy.X]
        best, curve = fit(list(noisy.X) + list(trusted.X), relabeled + list(trusted.labels))
        return ModeResult(mode, best, curve, corrected=relabeled)

    need(noisy, "noisy")
    need(trusted, "trusted")
    cfg = replace(gplc_cfg, agreement=(mode == "gplc"))
    res = run_gplc(noisy.X, noisy.labels, trusted.X, trusted.labels, cfg, tcfg, model_cfg,
                   Xv, Yv, noisy.truth, seed, on_round)
    return ModeResult(mode, res.best, history=res.history, deltas=res.deltas,
                      corrected=res.noisy_labels, clean=res.clean_labels)


def predict_split(model, split: Split) -> list:
    return [predict_track(model, x)[1] for x in split.X]


def fixed_predictions(tracks_or_lengths) -> list:
    """Always-contact baseline."""
    return [np.ones(n if isinstance(n, int) else len(n), dtype=np.int8) for n in tracks_or_lengths]


def iou_predictions(tracks) -> list:
    """Contact wherever the hand mask overlaps the object box."""
    return [np.array([mask_box_iou(f.hand_mask, f.object_box) > 0 for f in tr.frames], dtype=np.int8)
            for tr in tracks]
