"""Frame, boundary and segment metrics for binary contact sequences."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BOUNDARY_TOLERANCE = 6
CORRECT_FRAME_ACC = 0.9


def _binary(seq, name):
    a = np.asarray(seq)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if a.size and not np.isin(a, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return a.astype(np.int8)


def _pair(pred, gt):
    p, g = _binary(pred, "pred"), _binary(gt, "gt")
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: pred {p.size}, gt {g.size}")
    return p, g


def boundaries(seq) -> np.ndarray:
    """Indices t with seq[t-1] != seq[t]."""
    a = np.asarray(seq)
    return np.flatnonzero(a[1:] != a[:-1]) + 1


def frame_accuracy(pred, gt) -> float:
    """Mean per-class recall over the classes present in ``gt``."""
    p, g = _pair(pred, gt)
    if g.size == 0:
        raise ValueError("empty sequence")
    recalls = [float((p[g == c] == c).mean()) for c in (0, 1) if (g == c).any()]
    return math.fsum(recalls) / len(recalls)


def match_boundaries(a, b, tol=BOUNDARY_TOLERANCE) -> list:
    """Maximum one-to-one matching of two boundary sets with |a - b| <= tol.

    A left-to-right sweep over both sorted lists matches each boundary with the
    earliest compatible partner.  Because every tolerance window has the same
    width, the windows are ordered and this sweep attains maximum cardinality.
    Nearest-pair-first greedy does not: {0, 6} vs {5, 11} at tol 6.
    """
    a, b = sorted(int(x) for x in a), sorted(int(x) for x in b)
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        if abs(a[i] - b[j]) <= tol:
            out.append((a[i], b[j]))
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    return out


def f_measure(n_matched, n_pred, n_gt) -> float:
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0 or n_matched == 0:
        return 0.0
    p, r = n_matched / n_pred, n_matched / n_gt
    return 2 * p * r / (p + r)


def boundary_score(pred, gt, tol=BOUNDARY_TOLERANCE) -> float:
    p, g = _pair(pred, gt)
    bp, bg = boundaries(p), boundaries(g)
    return f_measure(len(match_boundaries(bp, bg, tol)), len(bp), len(bg))


def peripheral_accuracy(pred, gt, tol=BOUNDARY_TOLERANCE):
    """Plain accuracy on frames within ``tol`` of a gt boundary; None without boundaries."""
    p, g = _pair(pred, gt)
    bg = boundaries(g)
    if bg.size == 0:
        return None
    t = np.arange(g.size)
    near = (np.abs(t[:, None] - bg[None, :]) <= tol).any(axis=1)
    return float((p[near] == g[near]).mean())


def segments(seq) -> list:
    a = np.asarray(seq)
    if a.size == 0:
        return []
    keep = np.concatenate([[True], a[1:] != a[:-1]])
    return [int(v) for v in a[keep]]


def levenshtein(s, t) -> int:
    prev = list(range(len(t) + 1))
    for i, x in enumerate(s, 1):
        cur = [i]
        for j, y in enumerate(t, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def edit_score(pred, gt) -> float:
    p, g = _pair(pred, gt)
    sp, sg = segments(p), segments(g)
    longest = max(len(sp), len(sg))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(sp, sg) / longest


def is_correct_track(frame_acc, boundary_f) -> bool:
    return frame_acc > CORRECT_FRAME_ACC and boundary_f == 1.0


def correct_track_ratio(rows) -> float:
    if not rows:
        raise ValueError("no tracks")
    return sum(is_correct_track(r.frame_acc, r.boundary_f) for r in rows) / len(rows)


@dataclass(frozen=True)
class TrackMetrics:
    track_id: str
    frame_acc: float
    boundary_f: float
    peripheral_acc: float | None
    edit_score: float
    correct: bool


def track_metrics(track_id, pred, gt, tol=BOUNDARY_TOLERANCE) -> TrackMetrics:
    fa = frame_accuracy(pred, gt)
    bf = boundary_score(pred, gt, tol)
    return TrackMetrics(str(track_id), fa, bf, peripheral_accuracy(pred, gt, tol),
                        edit_score(pred, gt), is_correct_track(fa, bf))


METRIC_COLUMNS = ("frame_acc", "boundary_f", "peripheral_acc", "edit_score", "correct_track_ratio")


@dataclass
class MetricReport:
    frame_acc: float
    boundary_f: float
    peripheral_acc: float
    edit_score: float
    correct_track_ratio: float
    rows: list = field(default_factory=list)

    def as_dict(self):
        return {k: getattr(self, k) for k in METRIC_COLUMNS}


def _mean(values):
    # fsum is exactly rounded, so the mean does not depend on track order
    return math.fsum(values) / len(values) if values else float("nan")


def evaluate(predictions: dict, ground_truth: dict, tol=BOUNDARY_TOLERANCE) -> MetricReport:
    """Per-track metrics and their unweighted means.

    Peripheral accuracy averages only tracks whose ground truth has a boundary
    and is NaN when none does.
    """
    missing = sorted(set(ground_truth) - set(predictions))
    if missing:
        raise KeyError(f"missing predictions for {len(missing)} track(s): {missing[:5]}")
    if not ground_truth:
        raise ValueError("no tracks to evaluate")
    rows = [track_metrics(k, predictions[k], ground_truth[k], tol) for k in sorted(ground_truth)]
    return MetricReport(
        frame_acc=_mean([r.frame_acc for r in rows]),
        boundary_f=_mean([r.boundary_f for r in rows]),
        peripheral_acc=_mean([r.peripheral_acc for r in rows if r.peripheral_acc is not None]),
        edit_score=_mean([r.edit_score for r in rows]),
        correct_track_ratio=correct_track_ratio(rows),
        rows=rows,
    )


def labeled_accuracy(labels, truth) -> tuple:
    """(correct, labelled) counts of a possibly partial label sequence against truth."""
    lab = np.asarray(labels)
    mask = lab >= 0
    return int((lab[mask] == np.asarray(truth)[mask]).sum()), int(mask.sum())
