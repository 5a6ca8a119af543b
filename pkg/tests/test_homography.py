import numpy as np
import pytest

from handcontact import synthkit as sk
from handcontact.homography import (
    DegenerateConfigurationError,
    Homography,
    InsufficientBackgroundError,
    compensated_flow,
    estimate_background_homography,
    fit_homography_dlt,
    homography_flow,
    reprojection_error,
)
from handcontact.trackdata import Frame

SHAPE = (96, 128)


def grid_points(shape=SHAPE):
    ys, xs = np.mgrid[0:shape[0], 0:shape[1]]
    return np.stack([xs.ravel(), ys.ravel()], 1).astype(float)


def test_zero_flow_gives_identity():
    frame, _ = sk.planted_homography_frame(np.eye(3))
    h = estimate_background_homography(frame)
    assert np.array_equal(h.matrix, np.eye(3))
    assert h.inlier_ratio == 1.0


def test_noiseless_recovery():
    rng = np.random.default_rng(0)
    H = sk.random_homography(rng)
    frame, _ = sk.planted_homography_frame(H)
    h = estimate_background_homography(frame, rng=rng)
    pts = grid_points()
    assert reprojection_error(h.matrix, pts, pts + homography_flow(H, SHAPE).reshape(-1, 2)).mean() < 1e-6


def test_outliers_and_noise():
    rng = np.random.default_rng(1)
    H = sk.random_homography(rng)
    frame, outliers = sk.planted_homography_frame(H, noise_sigma=0.2, outlier_fraction=0.3, rng=rng)
    h = estimate_background_homography(frame, rng=np.random.default_rng(2))
    ys, xs = np.nonzero(~outliers)
    src = np.stack([xs, ys], 1).astype(float)
    assert reprojection_error(h.matrix, src, src + frame.flow_fwd[ys, xs]).mean() <= 0.5


def test_recovery_with_half_foreground():
    rng = np.random.default_rng(3)
    H = sk.random_homography(rng)
    frame, _ = sk.planted_homography_frame(H)
    # cover half the image with a box and scramble the flow there
    frame = Frame(frame.hand_mask, (0.0, 0.0, 64.0, 96.0), frame.flow_fwd.copy())
    frame.flow_fwd[:, :64] = 5.0
    h = estimate_background_homography(frame, rng=rng)
    ys, xs = np.mgrid[0:96, 64:128]
    src = np.stack([xs.ravel(), ys.ravel()], 1).astype(float)
    dst = src + homography_flow(H, SHAPE)[ys.ravel(), xs.ravel()]
    assert reprojection_error(h.matrix, src, dst).mean() <= 1e-6


def test_insufficient_background():
    frame = Frame(np.zeros((4, 4), bool), (0.0, 0.0, 4.0, 4.0), np.zeros((4, 4, 2)))
    with pytest.raises(InsufficientBackgroundError):
        estimate_background_homography(frame)


def test_collinear_samples_rejected():
    src = np.array([[0, 0], [1, 1], [2, 2], [3, 3], [4, 4.0]])
    with pytest.raises(DegenerateConfigurationError):
        fit_homography_dlt(src, src + 1)


def test_homography_invariants():
    with pytest.raises(DegenerateConfigurationError):
        Homography(np.zeros((3, 3)) + np.diag([1, 0, 1]))
    h = Homography(2 * np.eye(3))
    assert h.matrix[2, 2] == 1.0


def test_compensated_flow_examples():
    rng = np.random.default_rng(4)
    H = sk.random_homography(rng)
    frame, _ = sk.planted_homography_frame(H)
    assert np.abs(compensated_flow(frame, Homography(H))).max() < 1e-5
    # identity homography leaves the flow untouched
    np.testing.assert_array_equal(compensated_flow(frame, Homography.identity()), frame.flow_fwd)


def test_planted_object_velocity_survives_compensation():
    flow = np.zeros(SHAPE + (2,))
    flow[40:50, 60:80] = (1.5, -0.5)
    frame = Frame(np.zeros(SHAPE, bool), (60.0, 40.0, 80.0, 50.0), flow)
    h = estimate_background_homography(frame)
    res = compensated_flow(frame, h)
    assert np.abs(res[40:50, 60:80] - (1.5, -0.5)).max() < 1e-6
