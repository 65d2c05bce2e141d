import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rodtrack.features import (Projection, build_history, feature_length,
                               generate_candidates, instance_feature)
from rodtrack.model import FrameObservations, InstanceObservation

from conftest import point_cell, rod


def test_instance_feature_field_order():
    obs = InstanceObservation(0, 1, [1, 2, 3], [0, 0, 0], [2, 4, 6], 5)
    np.testing.assert_array_equal(instance_feature(obs), [1, 2, 3, 0, 0, 0, 2, 4, 6])


def test_instance_feature_translation():
    obs = InstanceObservation(0, 1, [1, 2, 3], [0, 0, 0], [2, 4, 6], 5)
    moved = InstanceObservation(0, 1, [6, 2, 3], [5, 0, 0], [2, 4, 6], 5)
    diff = instance_feature(moved) - instance_feature(obs)
    np.testing.assert_array_equal(diff, [5, 0, 0, 5, 0, 0, 0, 0, 0])


def test_rod_extent_longest_along_axis():
    f = instance_feature(rod([0, 0, 0], [0, 1, 0], 12.0, radius=1.5))
    ext = f[6:]
    assert ext[1] >= ext[0] and ext[1] >= ext[2]


A, B, C, D = (np.full(9, v, float) for v in (1, 2, 3, 4))


def test_history_r0():
    out = build_history([A], B, 0)
    assert len(out) == 18
    np.testing.assert_array_equal(out, np.concatenate([A, B]))


def test_history_r2_full():
    out = build_history([A, B, C], D, 2)
    assert len(out) == 36 == feature_length(2)
    np.testing.assert_array_equal(out, np.concatenate([A, B, C, D]))


def test_history_left_pads_with_earliest():
    np.testing.assert_array_equal(build_history([C], D, 2), np.concatenate([C, C, C, D]))
    np.testing.assert_array_equal(build_history([B, C], D, 2), np.concatenate([B, B, C, D]))


def test_history_keeps_last_r_plus_one():
    np.testing.assert_array_equal(build_history([A, B, C], D, 1), np.concatenate([B, C, D]))


def test_history_errors():
    with pytest.raises(ValueError):
        build_history([A], B, -1)
    with pytest.raises(ValueError):
        build_history([], B, 1)


def frame(t, layout):
    return FrameObservations.from_list(t, [point_cell(t, i, p) for i, p in layout.items()])


def test_single_pair_gives_one_candidate():
    cands = generate_candidates(frame(0, {1: (0, 0, 0)}), frame(1, {1: (1, 0, 0)}), 4)
    assert [(c.source_id, c.target_id) for c in cands] == [(1, 1)]


def test_knn_keeps_four_nearest_in_order():
    f0 = frame(0, {1: (0, 0, 0)})
    f1 = frame(1, {k: (float(6 - k), 0, 0) for k in range(1, 6)})   # id 5 at 1, id 1 at 5
    cands = generate_candidates(f0, f1, 4)
    assert [c.target_id for c in cands] == [5, 4, 3, 2]
    assert [c.distance for c in cands] == [1, 2, 3, 4]
    assert [c.rank for c in cands] == [0, 1, 2, 3]


def test_constant_velocity_projects_forward():
    f0 = frame(0, {1: (0, 0, 0)})
    f1 = frame(1, {1: (10.1, 0, 0), 2: (0.2, 0, 0)})
    still = generate_candidates(f0, f1, 1, Projection.CONSTANT_POSITION, {1: np.array([10.0, 0, 0])})
    moving = generate_candidates(f0, f1, 1, Projection.CONSTANT_VELOCITY, {1: np.array([10.0, 0, 0])})
    assert still[0].target_id == 2
    assert moving[0].target_id == 1
    # without a displacement the velocity model falls back to the current position
    assert generate_candidates(f0, f1, 1, "constant_velocity")[0].target_id == 2


def test_distance_ties_go_to_smaller_target():
    f0 = frame(0, {1: (0, 0, 0)})
    f1 = frame(1, {7: (1, 0, 0), 3: (-1, 0, 0), 5: (0, 1, 0)})
    assert [c.target_id for c in generate_candidates(f0, f1, 3)] == [3, 5, 7]


def test_empty_frames_give_no_candidates():
    assert generate_candidates(frame(0, {1: (0, 0, 0)}), frame(1, {}), 4) == []
    assert generate_candidates(frame(0, {}), frame(1, {1: (0, 0, 0)}), 4) == []
    with pytest.raises(ValueError):
        generate_candidates(frame(0, {1: (0, 0, 0)}), frame(1, {1: (0, 0, 0)}), 0)


def test_candidate_feature_uses_history():
    f0 = frame(0, {1: (0, 0, 0)})
    f1 = frame(1, {2: (1, 0, 0)})
    hist = {1: [A, B]}
    c = generate_candidates(f0, f1, 1, histories=hist, r=2)[0]
    np.testing.assert_array_equal(c.feature, np.concatenate([A, A, B, instance_feature(f1[2])]))


layouts = st.dictionaries(st.integers(1, 30),
                          st.tuples(*[st.floats(-50, 50, allow_nan=False)] * 3),
                          min_size=1, max_size=8)


@settings(max_examples=80, deadline=None)
@given(layouts, layouts, st.integers(1, 6), st.integers(0, 3))
def test_candidates_match_sorting_oracle(src, dst, k, r):
    f0, f1 = frame(0, src), frame(1, dst)
    cands = generate_candidates(f0, f1, k, r=r)
    for i, p in sorted(src.items()):
        # oracle: python sort on (distance, id)
        ranked = sorted(dst, key=lambda j: (float(np.linalg.norm(np.subtract(dst[j], p))), j))
        mine = [c.target_id for c in cands if c.source_id == i]
        assert mine == ranked[:k]
        assert 1 <= len(mine) <= k
    assert all(len(c.feature) == feature_length(r) for c in cands)
    keys = [(c.source_id, c.rank) for c in cands]
    assert keys == sorted(keys)
