"""Motion-cue pseudo-labels for hand-object tracks.

Each frame's forward flow is compensated for camera motion, thresholded into
moving-region masks, summarized into per-region moving ratios, and passed
through a fixed rule table.  Labels are then propagated into unlabelled
stretches while the hand-object point distance stays put.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .homography import (
    DegenerateConfigurationError,
    InsufficientBackgroundError,
    background_mask,
    compensated_flow,
    estimate_background_homography,
)
from .trackdata import CONTACT, NO_CONTACT, UNLABELED, box_mask, mask_box_iou

log = logging.getLogger(__name__)

DIR_EPS = 1e-6


class EmptyRegionError(ValueError):
    pass


@dataclass
class PseudoLabelConfig:
    sigma_contact: float = 2.0
    sigma_nocontact: float = 1.0
    hr_min: float = 0.7
    or_min_contact: float = 0.2
    or_max_nocontact: float = 0.05
    br_max: float = 0.2
    sim_min_contact: float = 0.5
    sim_max_nocontact: float = 0.0
    extension_rel_tol: float = 0.15
    max_points_per_region: int = 100
    fb_consistency_tol: float = 1.0

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise ValueError("; ".join(errors))

    def problems(self):
        errors = []
        if not 0 <= self.or_max_nocontact < self.or_min_contact <= 1:
            errors.append("need 0 <= or_max_nocontact < or_min_contact <= 1")
        if self.sigma_contact <= 0 or self.sigma_nocontact <= 0:
            errors.append("sigma_contact and sigma_nocontact must be > 0")
        if not 0 <= self.hr_min <= 1 or not 0 <= self.br_max <= 1:
            errors.append("hr_min and br_max must lie in [0, 1]")
        if self.extension_rel_tol < 0:
            errors.append("extension_rel_tol must be >= 0")
        if self.max_points_per_region < 1:
            errors.append("max_points_per_region must be >= 1")
        if self.fb_consistency_tol <= 0:
            errors.append("fb_consistency_tol must be > 0")
        return errors

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown pseudolabel keys: {sorted(unknown)}")
        cast = {k: (int(v) if k == "max_points_per_region" else float(v)) for k, v in d.items()}
        return cls(**cast)

    def to_dict(self):
        return asdict(self)


@dataclass
class MotionStats:
    h_r: float
    o_r: float
    b_r: float
    iou: float
    dir_sim: float
    dir_defined: bool
    mean_hand_speed: float
    mean_obj_speed: float


def moving_mask(residual, sigma) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return np.hypot(residual[..., 0], residual[..., 1]) > sigma


def object_region(frame) -> np.ndarray:
    """Box interior minus the target hand; the whole box if the hand covers it."""
    box = box_mask(frame.object_box, frame.hand_mask.shape)
    region = box & ~frame.hand_mask
    return region if region.any() else box


def region_stats(frame, moving, residual) -> MotionStats:
    hand = frame.hand_mask
    if not hand.any():
        raise EmptyRegionError("hand mask has no pixels")
    obj = object_region(frame)
    if not obj.any():
        raise EmptyRegionError("object box has no interior pixels")
    bg = background_mask(frame)

    h_r = float(moving[hand].mean())
    o_r = float(moving[obj].mean())
    b_r = float(moving[bg].mean()) if bg.any() else 0.0

    d_h = residual[hand].mean(axis=0)
    d_o = residual[obj].mean(axis=0)
    nh, no = np.linalg.norm(d_h), np.linalg.norm(d_o)
    defined = bool(nh >= DIR_EPS and no >= DIR_EPS)
    sim = float(np.clip(d_h @ d_o / (nh * no), -1.0, 1.0)) if defined else 0.0

    speed = np.hypot(residual[..., 0], residual[..., 1])
    return MotionStats(
        h_r=h_r,
        o_r=o_r,
        b_r=b_r,
        iou=mask_box_iou(hand, frame.object_box),
        dir_sim=sim,
        dir_defined=defined,
        mean_hand_speed=float(speed[hand].mean()),
        mean_obj_speed=float(speed[obj].mean()),
    )


def _rules(sc: MotionStats, sn: MotionStats, cfg: PseudoLabelConfig):
    """Return (contact, no_contact, cancelled) for one frame."""
    if sc.iou <= 0:
        return False, True, False
    joint = sc.h_r >= cfg.hr_min and sc.o_r >= cfg.or_min_contact
    contact = joint and sc.dir_defined and sc.dir_sim > cfg.sim_min_contact
    opposed = joint and sc.dir_defined and sc.dir_sim < cfg.sim_max_nocontact
    hand_only = sn.h_r >= cfg.hr_min and sn.o_r < cfg.or_max_nocontact
    bg_ok_c = sc.b_r < cfg.br_max
    bg_ok_n = sn.b_r < cfg.br_max
    fired_c = contact and bg_ok_c
    fired_n = (hand_only and bg_ok_n) or (opposed and bg_ok_c)
    cancelled = (contact and not bg_ok_c) or (hand_only and not bg_ok_n) or (opposed and not bg_ok_c)
    return fired_c, fired_n, cancelled and not (fired_c or fired_n)


def assign_frame_label(stats_c: MotionStats, stats_n: MotionStats, cfg: PseudoLabelConfig) -> int:
    contact, no_contact, _ = _rules(stats_c, stats_n, cfg)
    if contact:
        return CONTACT
    if no_contact:
        return NO_CONTACT
    return UNLABELED


# ------------------------------------------------------------ trajectories


def bilinear(field, pts):
    """Sample an (H, W, C) field at float (x, y) points, clamping to the border."""
    h, w = field.shape[:2]
    x = np.clip(pts[:, 0], 0, w - 1)
    y = np.clip(pts[:, 1], 0, h - 1)
    x0 = np.minimum(np.floor(x).astype(int), w - 2 if w > 1 else 0)
    y0 = np.minimum(np.floor(y).astype(int), h - 2 if h > 1 else 0)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = (x - x0)[:, None]
    ay = (y - y0)[:, None]
    top = field[y0, x0] * (1 - ax) + field[y0, x1] * ax
    bot = field[y1, x0] * (1 - ax) + field[y1, x1] * ax
    return (top * (1 - ay) + bot * ay).astype(np.float64)


def seed_points(region, cap) -> np.ndarray:
    """Uniform grid of (x, y) points inside ``region``, at most ``cap`` of them."""
    ys, xs = np.nonzero(region)
    if xs.size == 0:
        return np.zeros((0, 2))
    x_lo, x_hi, y_lo, y_hi = xs.min(), xs.max(), ys.min(), ys.max()
    step = max(1, int(np.sqrt(xs.size / cap)))
    while True:
        gx = np.arange(x_lo + step // 2, x_hi + 1, step)
        gy = np.arange(y_lo + step // 2, y_hi + 1, step)
        yy, xx = np.meshgrid(gy, gx, indexing="ij")
        keep = region[yy, xx]
        if keep.sum() <= cap:
            break
        step += 1
    if not keep.any():
        # region thinner than the grid offset
        idx = np.linspace(0, xs.size - 1, min(cap, xs.size)).round().astype(int)
        return np.stack([xs[idx], ys[idx]], axis=1).astype(np.float64)
    return np.stack([xx[keep], yy[keep]], axis=1).astype(np.float64)


@dataclass
class PointTrajectorySet:
    """Positions shaped (n_frames, n_points, 2); NaN where a point is not alive."""

    positions: np.ndarray
    is_hand: np.ndarray
    start_frame: int

    def alive(self, t):
        return ~np.isnan(self.positions[t, :, 0])

    def mean_pair_distance(self, t, reference=None):
        """Mean distance over hand-object pairs alive at ``t`` (and at ``reference``).

        Returns (distance at t, distance at reference over the same pairs),
        or None when no pair survives.
        """
        alive = self.alive(t)
        if reference is not None:
            alive &= self.alive(reference)
        hand = alive & self.is_hand
        obj = alive & ~self.is_hand
        if not hand.any() or not obj.any():
            return None

        def mean_dist(frame):
            p = self.positions[frame]
            d = p[hand][:, None, :] - p[obj][None, :, :]
            return float(np.sqrt((d ** 2).sum(-1)).mean())

        ref = mean_dist(reference) if reference is not None else None
        return mean_dist(t), ref


def track_points(track, start_frame, cfg: PseudoLabelConfig, first=None, last=None) -> PointTrajectorySet:
    """Seed points in hand and object at ``start_frame`` and follow them both ways.

    Tracking is limited to frames ``first..last`` (inclusive, default the whole
    track).  A point dies once its forward-backward round trip misses by more
    than ``cfg.fb_consistency_tol`` or it leaves the image.
    """
    n = len(track)
    first = 0 if first is None else max(0, first)
    last = n - 1 if last is None else min(n - 1, last)
    fr = track.frames[start_frame]
    hand_pts = seed_points(fr.hand_mask, cfg.max_points_per_region)
    obj_pts = seed_points(object_region(fr), cfg.max_points_per_region)
    pts0 = np.concatenate([hand_pts, obj_pts])
    is_hand = np.arange(len(pts0)) < len(hand_pts)
    pos = np.full((n, len(pts0), 2), np.nan)
    pos[start_frame] = pts0
    w, h = track.width, track.height

    def run(step):
        p = pts0.copy()
        alive = np.ones(len(p), dtype=bool)
        t = start_frame
        while alive.any():
            nt = t + step
            if nt < first or nt > last:
                break
            there = track.frames[t].flow_fwd if step > 0 else track.frames[t].flow_bwd
            back = track.frames[nt].flow_bwd if step > 0 else track.frames[nt].flow_fwd
            if there is None or back is None:
                break
            q = p + bilinear(there, p)
            r = q + bilinear(back, q)
            inside = (q[:, 0] >= 0) & (q[:, 0] <= w - 1) & (q[:, 1] >= 0) & (q[:, 1] <= h - 1)
            fb_ok = np.linalg.norm(r - p, axis=1) <= cfg.fb_consistency_tol
            alive &= inside & fb_ok
            p = q
            pos[nt, alive] = p[alive]
            t = nt

    run(+1)
    run(-1)
    return PointTrajectorySet(pos, is_hand, start_frame)


def _extend_from(track, anchor, state, frames, cfg):
    """Frames (in propagation order) reachable from ``anchor`` under the distance band."""
    lo, hi = min(*frames, anchor), max(*frames, anchor)
    traj = track_points(track, anchor, cfg, first=lo, last=hi)
    reached = []
    for t in frames:
        d = traj.mean_pair_distance(t, reference=anchor)
        if d is None:
            break
        cur, ref = d
        if abs(cur - ref) > cfg.extension_rel_tol * ref:
            break
        reached.append(t)
    return reached


def extend_labels(track, labels, cfg: PseudoLabelConfig) -> np.ndarray:
    """Fill unlabelled runs from their labelled neighbours.

    Each run is entered from the left (forward in time) and from the right
    (backward).  A frame reached by both sides with different states stays
    unlabelled.
    """
    labels = np.asarray(labels, dtype=np.int8)
    out = labels.copy()
    n = len(labels)
    t = 0
    while t < n:
        if labels[t] != UNLABELED:
            t += 1
            continue
        a = t
        while t < n and labels[t] == UNLABELED:
            t += 1
        b = t - 1
        proposals = {}
        if a > 0:
            for f in _extend_from(track, a - 1, labels[a - 1], list(range(a, b + 1)), cfg):
                proposals.setdefault(f, set()).add(int(labels[a - 1]))
        if b + 1 < n:
            for f in _extend_from(track, b + 1, labels[b + 1], list(range(b, a - 1, -1)), cfg):
                proposals.setdefault(f, set()).add(int(labels[b + 1]))
        for f, states in proposals.items():
            if len(states) == 1:
                out[f] = states.pop()
    return out


# ---------------------------------------------------------------- pipeline


def frame_residual(frame, rng=None):
    h = estimate_background_homography(frame, rng=rng)
    return compensated_flow(frame, h)


def frame_stats(frame, cfg: PseudoLabelConfig, rng=None):
    """Motion statistics at the contact and no-contact thresholds."""
    residual = frame_residual(frame, rng)
    sc = region_stats(frame, moving_mask(residual, cfg.sigma_contact), residual)
    sn = region_stats(frame, moving_mask(residual, cfg.sigma_nocontact), residual)
    return sc, sn


def frame_rng(seed, t):
    return np.random.default_rng([int(seed), int(t)])


@dataclass
class LabelDiagnostics:
    track_id: str
    n_frames: int
    n_labeled: int
    n_assigned: int
    n_cancelled: int
    n_failed: int

    @property
    def coverage(self):
        return self.n_labeled / self.n_frames if self.n_frames else 0.0


def assign_labels(track, cfg: PseudoLabelConfig, seed=0):
    """Per-frame rule labels before extension, plus cancelled/failed counts."""
    labels = np.full(len(track), UNLABELED, dtype=np.int8)
    cancelled = failed = 0
    for t, fr in enumerate(track.frames):
        try:
            sc, sn = frame_stats(fr, cfg, frame_rng(seed, t))
        except (InsufficientBackgroundError, DegenerateConfigurationError, EmptyRegionError) as exc:
            log.warning("track %s frame %d left unlabelled: %s", track.id, t, exc)
            failed += 1
            continue
        contact, no_contact, was_cancelled = _rules(sc, sn, cfg)
        cancelled += was_cancelled
        if contact:
            labels[t] = CONTACT
        elif no_contact:
            labels[t] = NO_CONTACT
    return labels, cancelled, failed


def generate_pseudolabels(track, cfg: PseudoLabelConfig | None = None, seed=0, return_diagnostics=False):
    cfg = cfg or PseudoLabelConfig()
    assigned, cancelled, failed = assign_labels(track, cfg, seed)
    labels = extend_labels(track, assigned, cfg)
    if not return_diagnostics:
        return labels
    diag = LabelDiagnostics(
        track.id,
        len(track),
        int((labels != UNLABELED).sum()),
        int((assigned != UNLABELED).sum()),
        cancelled,
        failed,
    )
    return labels, diag


class PseudoLabeler(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping tracks to motion pseudo-labels.

    ``transform`` returns one int8 array per track with values 0, 1 or -1.
    """

    def __init__(self, sigma_contact=2.0, sigma_nocontact=1.0, hr_min=0.7, or_min_contact=0.2,
                 or_max_nocontact=0.05, br_max=0.2, sim_min_contact=0.5, sim_max_nocontact=0.0,
                 extension_rel_tol=0.15, max_points_per_region=100, fb_consistency_tol=1.0,
                 random_state=0):
        self.sigma_contact = sigma_contact
        self.sigma_nocontact = sigma_nocontact
        self.hr_min = hr_min
        self.or_min_contact = or_min_contact
        self.or_max_nocontact = or_max_nocontact
        self.br_max = br_max
        self.sim_min_contact = sim_min_contact
        self.sim_max_nocontact = sim_max_nocontact
        self.extension_rel_tol = extension_rel_tol
        self.max_points_per_region = max_points_per_region
        self.fb_consistency_tol = fb_consistency_tol
        self.random_state = random_state

    def config(self) -> PseudoLabelConfig:
        params = self.get_params()
        params.pop("random_state")
        return PseudoLabelConfig(**params)

    def fit(self, tracks=None, y=None):
        self.config_ = self.config()
        return self

    def transform(self, tracks):
        cfg = getattr(self, "config_", None) or self.config()
        seed = 0 if self.random_state is None else self.random_state
        self.diagnostics_ = []
        out = []
        for tr in tracks:
            labels, diag = generate_pseudolabels(tr, cfg, seed, return_diagnostics=True)
            out.append(labels)
            self.diagnostics_.append(diag)
        return out
