"""Per-frame motion and geometry features for the sequence classifier."""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .homography import DegenerateConfigurationError, InsufficientBackgroundError
from .motionlabel import EmptyRegionError, PseudoLabelConfig, frame_rng, frame_stats
from .parallel import map_ordered
from .trackdata import box_mask, mask_box_iou

log = logging.getLogger(__name__)

FEATURE_NAMES = (
    "iou",
    "hand_ratio",
    "object_ratio",
    "background_ratio",
    "direction_similarity",
    "direction_defined",
    "hand_speed",
    "object_speed",
    "centroid_distance",
    "box_area",
    "other_hand_overlap",
    "other_object_overlap",
)
N_FEATURES = len(FEATURE_NAMES)
MOTION_SLOTS = slice(1, 8)


def _geometry(frame, shape):
    h, w = shape
    diag = float(np.hypot(w, h))
    x0, y0, x1, y1 = frame.object_box
    ys, xs = np.nonzero(frame.hand_mask)
    if xs.size:
        # pixel centres sit at +0.5
        dist = np.hypot(xs.mean() + 0.5 - (x0 + x1) / 2, ys.mean() + 0.5 - (y0 + y1) / 2) / diag
    else:
        dist = 1.0
    area = max(x1 - x0, 0.0) * max(y1 - y0, 0.0) / (w * h)
    box = box_mask(frame.object_box, shape)
    other_hand = any((m & (box | frame.hand_mask)).any() for m in frame.other_hand_masks)
    other_obj = any((box_mask(b, shape) & (frame.hand_mask | box)).any() for b in frame.other_object_boxes)
    return float(dist), float(area), float(other_hand), float(other_obj)


def frame_features(frame, cfg: PseudoLabelConfig, rng=None):
    """Feature vector for one frame and whether the motion cues were computable."""
    shape = frame.hand_mask.shape
    v = np.zeros(N_FEATURES)
    v[8:] = _geometry(frame, shape)
    v[0] = mask_box_iou(frame.hand_mask, frame.object_box)
    try:
        sc, _ = frame_stats(frame, cfg, rng)
    except (InsufficientBackgroundError, DegenerateConfigurationError, EmptyRegionError) as exc:
        log.debug("motion features zeroed: %s", exc)
        return v, False
    v[1:8] = (sc.h_r, sc.o_r, sc.b_r, sc.dir_sim, float(sc.dir_defined),
              sc.mean_hand_speed, sc.mean_obj_speed)
    return v, True


def extract_features(track, cfg: PseudoLabelConfig | None = None, seed=0, return_valid=False):
    """(n_frames, 12) float64 features; frame t uses the same RNG stream as pseudo-labelling."""
    cfg = cfg or PseudoLabelConfig()
    out = np.zeros((len(track), N_FEATURES))
    valid = np.ones(len(track), dtype=bool)
    for t, fr in enumerate(track.frames):
        out[t], valid[t] = frame_features(fr, cfg, frame_rng(seed, t))
    return (out, valid) if return_valid else out


class MotionFeatures(TransformerMixin, BaseEstimator):
    """Transformer from tracks to per-frame feature matrices.

    ``valid_`` holds one boolean array per track after ``transform``; frames
    whose motion cues failed carry zeros in the motion slots.
    """

    def __init__(self, sigma_contact=2.0, random_state=0, threads=1):
        self.sigma_contact = sigma_contact
        self.random_state = random_state
        self.threads = threads

    def fit(self, tracks=None, y=None):
        self.n_features_out_ = N_FEATURES
        return self

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)

    def transform(self, tracks):
        cfg = PseudoLabelConfig(sigma_contact=self.sigma_contact)
        seed = 0 if self.random_state is None else self.random_state
        res = map_ordered(lambda tr: extract_features(tr, cfg, seed, return_valid=True),
                          list(tracks), self.threads)
        self.valid_ = [v for _, v in res]
        return [f for f, _ in res]
