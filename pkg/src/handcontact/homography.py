"""Robust planar homography fitting from flow correspondences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trackdata import box_mask

RANSAC_MAX_ITER = 500
RANSAC_THRESHOLD = 1.0
RANSAC_EARLY_EXIT = 0.99
RANSAC_CHUNK = 25


class InsufficientBackgroundError(ValueError):
    pass


class DegenerateConfigurationError(ValueError):
    pass


@dataclass
class Homography:
    matrix: np.ndarray
    inlier_ratio: float = 1.0
    inliers: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError("homography must be a finite 3x3 matrix")
        if abs(m[2, 2]) < 1e-12:
            raise DegenerateConfigurationError("homography has zero bottom-right entry")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-9:
            raise DegenerateConfigurationError("homography is singular")
        if not 0.0 <= self.inlier_ratio <= 1.0:
            raise ValueError("inlier_ratio must lie in [0, 1]")
        self.matrix = m

    @classmethod
    def identity(cls):
        return cls(np.eye(3), 1.0)

    def apply(self, pts):
        return apply_homography(self.matrix, pts)


def apply_homography(H, pts):
    pts = np.asarray(pts, dtype=np.float64)
    x, y = pts[..., 0], pts[..., 1]
    den = H[2, 0] * x + H[2, 1] * y + H[2, 2]
    u = (H[0, 0] * x + H[0, 1] * y + H[0, 2]) / den
    v = (H[1, 0] * x + H[1, 1] * y + H[1, 2]) / den
    return np.stack([u, v], axis=-1)


def _normalizer(pts):
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def _dlt_rows(src, dst):
    """Two DLT equations per correspondence; src, dst shaped (..., n, 2)."""
    x, y = src[..., 0], src[..., 1]
    u, v = dst[..., 0], dst[..., 1]
    one, zero = np.ones_like(x), np.zeros_like(x)
    r1 = np.stack([-x, -y, -one, zero, zero, zero, u * x, u * y, u], axis=-1)
    r2 = np.stack([zero, zero, zero, -x, -y, -one, v * x, v * y, v], axis=-1)
    return np.concatenate([r1, r2], axis=-2)


def fit_homography_dlt(src, dst) -> np.ndarray:
    """Normalized least-squares DLT over all given correspondences."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) < 4:
        raise InsufficientBackgroundError(f"need >= 4 correspondences, got {len(src)}")
    if _collinear(src) or _collinear(dst):
        raise DegenerateConfigurationError("correspondences are collinear")
    Ts, Td = _normalizer(src), _normalizer(dst)
    a = _dlt_rows(apply_homography(Ts, src), apply_homography(Td, dst))
    _, _, vt = np.linalg.svd(a, full_matrices=False)
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    return H / H[2, 2]


def _collinear(pts, tol=1e-9) -> bool:
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv.size < 2 or sv[1] <= tol * max(sv[0], 1.0)


def reprojection_error(H, src, dst):
    return np.linalg.norm(apply_homography(H, src) - dst, axis=-1)


def ransac_homography(src, dst, rng=None, max_iter=RANSAC_MAX_ITER,
                      threshold=RANSAC_THRESHOLD, early_exit=RANSAC_EARLY_EXIT) -> Homography:
    """RANSAC over 4-point normalized DLT hypotheses, refit on the final inliers.

    All minimal samples are drawn up front and scored in chunks; the first
    hypothesis in draw order whose inlier ratio reaches ``early_exit`` wins,
    otherwise the one with the most inliers.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = len(src)
    if n < 4:
        raise InsufficientBackgroundError(f"need >= 4 background samples, got {n}")
    if _collinear(src):
        raise DegenerateConfigurationError("background samples are collinear")
    rng = np.random.default_rng(rng)

    Ts, Td = _normalizer(src), _normalizer(dst)
    ns, nd = apply_homography(Ts, src), apply_homography(Td, dst)
    samples = _minimal_samples(rng, n, max_iter)

    Td_inv = np.linalg.inv(Td)
    src_h = np.column_stack([src, np.ones(n)])
    best, best_count, best_err = -1, -1, None
    for lo in range(0, max_iter, RANSAC_CHUNK):
        err, counts = _score_hypotheses(samples[lo:lo + RANSAC_CHUNK], ns, nd, Ts, Td_inv, src_h, dst, threshold)
        hit = np.flatnonzero(counts >= early_exit * n)
        if hit.size:
            best, best_count, best_err = lo + hit[0], counts[hit[0]], err[hit[0]]
            break
        k = int(np.argmax(counts))
        if counts[k] > best_count:
            best, best_count, best_err = lo + k, counts[k], err[k]
    if best_count < 4:
        raise DegenerateConfigurationError("no RANSAC hypothesis has 4 inliers")
    inliers = best_err < threshold

    H = fit_homography_dlt(src[inliers], dst[inliers])
    # one refit round: inliers under the refined model
    refined = reprojection_error(H, src, dst) < threshold
    if refined.sum() >= inliers.sum():
        inliers = refined
        H = fit_homography_dlt(src[inliers], dst[inliers])
    return Homography(H, float(inliers.mean()), inliers)


def _minimal_samples(rng, n, count):
    """``count`` rows of 4 distinct indices in [0, n)."""
    samples = rng.integers(0, n, (count, 4))
    while True:
        s = np.sort(samples, axis=1)
        dup = (np.diff(s, axis=1) == 0).any(axis=1)
        if not dup.any():
            return samples
        samples[dup] = rng.integers(0, n, (int(dup.sum()), 4))


def _score_hypotheses(samples, ns, nd, Ts, Td_inv, src_h, dst, threshold):
    """Reprojection errors and inlier counts of the minimal-sample fits."""
    a = _dlt_rows(ns[samples], nd[samples])  # (k, 8, 9)
    _, sv, vt = np.linalg.svd(a)
    # a well-posed minimal sample has a one-dimensional null space
    ok = sv[:, 7] > 1e-8 * sv[:, 0]
    Hs = Td_inv[None] @ vt[:, -1].reshape(-1, 3, 3) @ Ts[None]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        Hs = Hs / Hs[:, 2:3, 2:3]
        proj = Hs @ src_h.T  # (k, 3, n)
        proj = proj[:, :2] / proj[:, 2:3]
        err = np.linalg.norm(proj.transpose(0, 2, 1) - dst[None], axis=-1)
    err[~np.isfinite(err)] = np.inf
    counts = (err < threshold).sum(axis=1)
    counts[~ok] = -1
    return err, counts


def background_mask(frame) -> np.ndarray:
    shape = frame.hand_mask.shape
    fg = frame.hand_mask | box_mask(frame.object_box, shape)
    for m in frame.other_hand_masks:
        fg |= m
    for b in frame.other_object_boxes:
        fg |= box_mask(b, shape)
    return ~fg


def estimate_background_homography(frame, rng=None, max_samples=400, flow=None) -> Homography:
    """Fit the camera homography from flow vectors outside every hand and object.

    Samples come from a regular grid over the background so that at most
    ``max_samples`` correspondences enter RANSAC.
    """
    flow = frame.flow_fwd if flow is None else flow
    bg = background_mask(frame)
    ys, xs = np.nonzero(bg)
    if xs.size < 4:
        raise InsufficientBackgroundError(f"only {xs.size} background pixels")
    if xs.size > max_samples:
        idx = np.linspace(0, xs.size - 1, max_samples).round().astype(int)
        ys, xs = ys[idx], xs[idx]
    src = np.stack([xs, ys], axis=1).astype(np.float64)
    dst = src + flow[ys, xs].astype(np.float64)
    if np.allclose(dst, src):
        inliers = np.ones(len(src), dtype=bool)
        return Homography(np.eye(3), 1.0, inliers)
    return ransac_homography(src, dst, rng=rng)


def homography_flow(H, shape) -> np.ndarray:
    """Displacement field warp(p) - p induced by ``H`` over a (height, width) grid."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    pts = np.stack([xs, ys], axis=-1).astype(np.float64)
    return apply_homography(H, pts) - pts


def compensated_flow(frame, h: Homography, flow=None) -> np.ndarray:
    flow = frame.flow_fwd if flow is None else flow
    return flow.astype(np.float64) - homography_flow(h.matrix, flow.shape[:2])
