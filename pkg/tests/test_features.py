import numpy as np

from handcontact import synthkit as sk
from handcontact.features import FEATURE_NAMES, N_FEATURES, MotionFeatures, extract_features
from handcontact.trackdata import Frame, Track
from builders import static_track

IDX = {n: i for i, n in enumerate(FEATURE_NAMES)}


def test_static_disjoint_scene():
    F = extract_features(static_track(4))
    assert F.shape == (4, N_FEATURES)
    assert np.all(F[:, IDX["iou"]] == 0)
    assert np.all(F[:, IDX["hand_speed"]] == 0) and np.all(F[:, IDX["object_speed"]] == 0)
    assert np.all(F[:, IDX["direction_defined"]] == 0)


def test_identical_frames_identical_vectors():
    F = extract_features(static_track(5, hand=((25, 15), 4)))
    assert all(np.array_equal(F[0], row) for row in F)


def test_grasp_scene_iou_positive_on_contact():
    track, gt = sk.generate_track(sk.scenario_bank()[0], seed=0)
    F = extract_features(track)
    assert np.all(F[gt == 1, IDX["iou"]] > 0)
    # the approach starts far from the box
    assert F[0, IDX["iou"]] == 0


def test_failed_frames_flagged():
    shape = (10, 10)
    hand = np.zeros(shape, bool)
    hand[2:5, 2:5] = True
    frames = [Frame(hand, (0, 0, 10, 10), np.zeros(shape + (2,)), None if t == 0 else np.zeros(shape + (2,)))
              for t in range(2)]
    F, valid = extract_features(Track("f", 10, 10, 15, frames), return_valid=True)
    assert not valid.any()
    assert np.all(F[:, 1:8] == 0)


def test_transformer_threads_agree():
    tracks = [sk.generate_track(s, seed=i)[0] for i, s in enumerate(sk.scenario_bank()[:3])]
    one = MotionFeatures(threads=1).fit(tracks).transform(tracks)
    many = MotionFeatures(threads=3).fit(tracks).transform(tracks)
    assert all(np.array_equal(a, b) for a, b in zip(one, many))
    assert list(MotionFeatures().get_feature_names_out()) == list(FEATURE_NAMES)
