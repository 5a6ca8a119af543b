import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from handcontact import synthkit as sk
from handcontact.homography import compensated_flow, estimate_background_homography
from handcontact.trackdata import Dataset, box_mask, load_labels, pair_overlap


def spec(phases, **kw):
    return sk.ScenarioSpec(phases=phases, **kw)


def test_idle_only_has_no_local_flow():
    tr, gt = sk.generate_track(spec([{"phase": "idle", "frames": 5}]))
    assert np.all(gt == 0)
    assert all(np.all(fr.flow_fwd == 0) for fr in tr.frames)


def test_grasp_moves_hand_and_object_together():
    s = spec([{"phase": "grasp", "frames": 4, "velocity": [1.5, -0.5]}])
    tr, gt = sk.generate_track(s)
    assert np.all(gt == 1)
    for name, vh, vo in sk.phase_script(s):
        assert np.array_equal(vh, vo)
    fr = tr.frames[0]
    hand_v = fr.flow_fwd[fr.hand_mask].mean(axis=0)
    box_v = fr.flow_fwd[box_mask(fr.object_box, tr.shape) & ~fr.hand_mask].mean(axis=0)
    np.testing.assert_allclose(hand_v, box_v, atol=1e-6)


def test_approach_keeps_object_still():
    s = spec([{"phase": "approach", "frames": 4, "velocity": [2.0, 0.0]}])
    for name, vh, vo in sk.phase_script(s):
        assert np.linalg.norm(vh) > 0 and np.all(vo == 0)
    tr, gt = sk.generate_track(s)
    assert np.all(gt == 0)
    fr = tr.frames[1]
    assert np.all(fr.flow_fwd[box_mask(fr.object_box, tr.shape) & ~fr.hand_mask] == 0)


def test_geometry_escaping_canvas_rejected():
    with pytest.raises(ValueError):
        sk.generate_track(spec([{"phase": "approach", "frames": 40, "velocity": [5.0, 0.0]}]))


def test_generation_deterministic():
    s = sk.scenario_bank()[5]
    a, _ = sk.generate_track(s, seed=3)
    b, _ = sk.generate_track(s, seed=3)
    assert a == b


def test_camera_only_residual_is_noise():
    s = spec([{"phase": "idle", "frames": 3}], camera={"kind": "pan", "pan": [1.5, -1.0]}, flow_sigma=0.1)
    tr, _ = sk.generate_track(s, seed=1)
    fr = tr.frames[1]
    res = compensated_flow(fr, estimate_background_homography(fr, np.random.default_rng(0)))
    assert np.abs(res).mean() < 0.15


# corruption

def test_corruption_rate_zero_and_one():
    gt = np.array([0, 1, 1, 0, 0, 1], np.int8)
    for mode in ("uniform_flip", "boundary_shift", "segment_flip"):
        assert np.array_equal(sk.corrupt_labels(gt, sk.CorruptionSpec(mode, 0.0, 1)), gt)
    assert np.array_equal(sk.corrupt_labels(gt, sk.CorruptionSpec("uniform_flip", 1.0)), 1 - gt)
    assert np.array_equal(sk.corrupt_labels(gt, sk.CorruptionSpec("segment_flip", 1.0)), 1 - gt)


def test_uniform_flip_rate_concentrates():
    gt = np.zeros(10000, np.int8)
    fracs = [sk.corrupt_labels(gt, sk.CorruptionSpec("uniform_flip", 0.2, s)).mean() for s in range(5)]
    assert abs(np.mean(fracs) - 0.2) <= 0.02


@settings(max_examples=100, deadline=None)
@given(bounds=st.lists(st.integers(1, 79), max_size=6, unique=True), seed=st.integers(0, 10 ** 6))
def test_boundary_shift_moves_each_boundary_at_most_six(bounds, seed):
    gt = np.zeros(80, np.int8)
    for b in sorted(bounds):
        gt[b:] ^= 1
    out = sk.corrupt_labels(gt, sk.CorruptionSpec("boundary_shift", 1.0, seed))
    old = np.flatnonzero(np.diff(gt)) + 1
    new = np.flatnonzero(np.diff(out)) + 1
    assert len(new) <= len(old)
    assert out[0] == gt[0]
    for b in new:
        assert np.abs(old - b).min() <= 6


def test_corruption_is_deterministic_and_validates():
    gt = np.array([0, 1] * 20, np.int8)
    s = sk.CorruptionSpec("uniform_flip", 0.3, 9)
    assert np.array_equal(sk.corrupt_labels(gt, s), sk.corrupt_labels(gt, s))
    with pytest.raises(ValueError):
        sk.CorruptionSpec("uniform_flip", 1.5)
    with pytest.raises(ValueError):
        sk.corrupt_labels(np.array([0, -1]), s)


# corpus

def test_scenario_bank_is_rich():
    bank = sk.scenario_bank()
    assert len(bank) >= 10
    assert any(s.camera["kind"] != "identity" for s in bank)
    assert any(s.distractors for s in bank)
    assert any(s.burst_frames for s in bank)


def test_corpus_splits_are_disjoint_and_reproducible(tmp_path):
    a = sk.generate_corpus(10, tmp_path / "a", seed=4)
    b = sk.generate_corpus(10, tmp_path / "b", seed=4)
    assert a == b
    ids = {}
    for split in sk.SPLITS:
        d = tmp_path / "a" / split
        if d.exists():
            ids[split] = {p.name for p in d.iterdir()}
    seen = [i for s in ids.values() for i in s]
    assert len(seen) == len(set(seen)) == 10
    for split in ("trusted", "test"):
        ds = Dataset.from_dir(tmp_path / "a" / split, split)
        for tr, lab in zip(ds.tracks, ds.labels):
            assert np.array_equal(lab, load_labels(tmp_path / "a" / split / tr.id / "truth.txt"))
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)


def test_grasp_scenes_overlap():
    plan = sk.corpus_plan(10, mix={"grasp_release": 1.0}, seed=2)
    for entry in plan:
        tr, gt, _ = sk.plan_track(entry)
        assert pair_overlap(tr)


def test_corpus_refuses_nonempty_dir(tmp_path):
    (tmp_path / "x").write_text("")
    with pytest.raises(FileExistsError):
        sk.generate_corpus(3, tmp_path)


def test_balanced_test_split():
    plan = sk.corpus_plan(200, seed=0)
    kinds = [k for s, _, k, _ in plan if s == "test"]
    n_c = sum(k in sk.CONTACT_KINDS for k in kinds)
    n_n = sum(k in sk.NO_CONTACT_KINDS for k in kinds)
    assert n_c == n_n > 0


def test_spec_dict_roundtrip():
    s = sk.scenario_bank()[2]
    assert sk.ScenarioSpec.from_dict(s.to_dict()).to_dict() == s.to_dict()
