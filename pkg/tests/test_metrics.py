import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from handcontact import metrics as M
from oracles import (
    exhaustive_matching,
    oracle_boundary_score,
    oracle_edit_score,
    random_binary_sequence,
    recursive_levenshtein,
)


def seq_with_boundaries(n, bounds, start=0):
    s = np.full(n, start, dtype=np.int8)
    for b in bounds:
        s[b:] ^= 1
    return s


binary_seqs = st.integers(2, 30).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 1), min_size=n, max_size=n),
                        st.lists(st.integers(0, 1), min_size=n, max_size=n)))


# frame accuracy

def test_frame_accuracy_identity():
    g = np.array([0, 0, 1, 1, 0])
    assert M.frame_accuracy(g, g) == 1.0


def test_frame_accuracy_single_class_recall():
    gt = np.ones(10, dtype=int)
    pred = gt.copy()
    pred[0] = 0
    assert M.frame_accuracy(pred, gt) == pytest.approx(0.9)


def test_frame_accuracy_balanced_hand_example():
    assert M.frame_accuracy([0, 1, 1, 1], [0, 0, 1, 1]) == 0.75


def test_frame_accuracy_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        M.frame_accuracy([0, 1], [0, 1, 1])


# boundary score

def test_boundary_score_half_matched():
    gt = seq_with_boundaries(60, [10, 30])
    pred = seq_with_boundaries(60, [12, 50])
    assert M.boundary_score(pred, gt) == 0.5


def test_boundary_score_complement():
    gt = seq_with_boundaries(40, [5, 17, 33])
    assert M.boundary_score(1 - gt, gt) == 1.0


def test_boundary_score_one_to_one():
    gt = seq_with_boundaries(30, [10, 14])
    pred = seq_with_boundaries(30, [12])
    assert M.boundary_score(pred, gt) == pytest.approx(2 / 3)


def test_boundary_score_empty_sets():
    z = np.zeros(10, dtype=int)
    assert M.boundary_score(z, z) == 1.0
    assert M.boundary_score(seq_with_boundaries(10, [4]), z) == 0.0
    assert M.boundary_score(z, seq_with_boundaries(10, [4])) == 0.0


def test_boundary_tolerance_edge():
    gt = seq_with_boundaries(30, [10])
    assert M.boundary_score(seq_with_boundaries(30, [16]), gt) == 1.0
    assert M.boundary_score(seq_with_boundaries(30, [17]), gt) == 0.0


def test_nearest_first_greedy_counterexample():
    # nearest pair (6, 5) first would leave 0 and 11 unmatched; the optimum is 2
    assert exhaustive_matching([0, 6], [5, 11]) == 2
    assert len(M.match_boundaries([0, 6], [5, 11])) == 2


@settings(max_examples=300, deadline=None)
@given(a=st.lists(st.integers(0, 60), max_size=8, unique=True),
       b=st.lists(st.integers(0, 60), max_size=8, unique=True),
       tol=st.integers(0, 8))
def test_matching_matches_exhaustive_oracle(a, b, tol):
    pairs = M.match_boundaries(a, b, tol)
    assert len(pairs) == exhaustive_matching(a, b, tol)
    assert len({p for p, _ in pairs}) == len(pairs) == len({q for _, q in pairs})
    assert all(abs(p - q) <= tol for p, q in pairs)


# peripheral accuracy

def test_peripheral_identity():
    gt = seq_with_boundaries(40, [20])
    assert M.peripheral_accuracy(gt, gt) == 1.0


def test_peripheral_undefined_without_boundary():
    assert M.peripheral_accuracy(np.zeros(20, int), np.zeros(20, int)) is None


def test_peripheral_window_example():
    gt = seq_with_boundaries(30, [10])
    pred = seq_with_boundaries(30, [13])
    assert M.peripheral_accuracy(pred, gt) == pytest.approx(10 / 13)


# edit score

def test_edit_identity():
    s = seq_with_boundaries(20, [3, 9])
    assert M.edit_score(s, s) == 1.0


def test_edit_missing_segment():
    gt = seq_with_boundaries(30, [10, 20])       # N C N
    pred = seq_with_boundaries(30, [10])         # N C
    assert M.edit_score(pred, gt) == pytest.approx(1 - 1 / 3)


def test_edit_oversegmented():
    gt = seq_with_boundaries(50, [10, 20])
    pred = seq_with_boundaries(50, [10, 20, 30, 40])
    assert M.edit_score(pred, gt) == pytest.approx(0.6)


@settings(max_examples=200, deadline=None)
@given(s=st.lists(st.integers(0, 1), max_size=8), t=st.lists(st.integers(0, 1), max_size=8))
def test_levenshtein_matches_recursive(s, t):
    assert M.levenshtein(s, t) == recursive_levenshtein(s, t)


# correct track ratio and aggregation

def test_correct_track_ratio():
    rows = [M.TrackMetrics("a", 0.95, 1.0, None, 1.0, True), M.TrackMetrics("b", 0.95, 0.5, None, 1.0, False)]
    assert M.correct_track_ratio(rows) == 0.5
    assert M.correct_track_ratio(rows[:1]) == 1.0
    assert not M.is_correct_track(0.9, 1.0)


def test_evaluate_single_track_equals_track_metrics():
    gt = seq_with_boundaries(40, [10, 25])
    pred = seq_with_boundaries(40, [12, 31])
    rep = M.evaluate({"t": pred}, {"t": gt})
    row = M.track_metrics("t", pred, gt)
    assert len(rep.rows) == 1
    assert rep.frame_acc == row.frame_acc
    assert rep.boundary_f == row.boundary_f
    assert rep.peripheral_acc == row.peripheral_acc
    assert rep.edit_score == row.edit_score


def test_evaluate_permutation_invariant():
    rng = np.random.default_rng(3)
    gt = {f"t{i}": random_binary_sequence(rng, 30, 4) for i in range(12)}
    pred = {k: random_binary_sequence(rng, 30, 4) for k in gt}
    a = M.evaluate(pred, gt).as_dict()
    keys = list(gt)[::-1]
    b = M.evaluate({k: pred[k] for k in keys}, {k: gt[k] for k in keys}).as_dict()
    assert a == b


def test_evaluate_missing_prediction():
    with pytest.raises(KeyError):
        M.evaluate({}, {"t": np.zeros(5, int)})


def test_evaluate_peripheral_excludes_constant_tracks():
    gt = {"mix": seq_with_boundaries(30, [10]), "flat": np.zeros(30, int)}
    pred = {"mix": seq_with_boundaries(30, [13]), "flat": np.zeros(30, int)}
    assert M.evaluate(pred, gt).peripheral_acc == pytest.approx(10 / 13)
    only_flat = M.evaluate({"flat": pred["flat"]}, {"flat": gt["flat"]})
    assert math.isnan(only_flat.peripheral_acc)


# properties

@settings(max_examples=300, deadline=None)
@given(pair=binary_seqs)
def test_metric_properties(pair):
    p, g = (np.array(x, dtype=np.int8) for x in pair)
    for v in (M.frame_accuracy(p, g), M.boundary_score(p, g), M.edit_score(p, g)):
        assert 0.0 <= v <= 1.0
    per = M.peripheral_accuracy(p, g)
    assert per is None or 0.0 <= per <= 1.0
    assert M.boundary_score(p, g) == M.boundary_score(g, p)
    assert M.edit_score(p, g) == M.edit_score(g, p)
    assert M.frame_accuracy(g, g) == M.boundary_score(g, g) == M.edit_score(g, g) == 1.0


def test_random_pairs_against_oracles():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 31))
        p, g = random_binary_sequence(rng, n, 8), random_binary_sequence(rng, n, 8)
        assert M.boundary_score(p, g) == oracle_boundary_score(p, g)
        assert M.edit_score(p, g) == oracle_edit_score(p, g)


def test_rejects_non_binary():
    with pytest.raises(ValueError):
        M.boundary_score([0, 2, 1], [0, 1, 1])
