import numpy as np
import pytest

from conftest import make_point_env
from oracles import path_length_loop
from ppcnet.env import random_goal_conf
from ppcnet.expert import BiRRTParams, birrt_plan, is_feasible, path_length
from ppcnet.postprocess import InfeasiblePathError, binary_state_contraction, post_process, resample

STEP = 0.1745


def is_subsequence(sub, full) -> bool:
    j = 0
    for row in full:
        if j < len(sub) and np.array_equal(row, sub[j]):
            j += 1
    return j == len(sub)


@pytest.fixture(scope="module")
def expert_paths():
    from ppcnet.env import reference_env
    env = reference_env("arm")
    rng = np.random.default_rng(21)
    paths = []
    for g in random_goal_conf(env, 60, rng):
        for a, b in ((env.home, g), (g, env.place)):
            paths.append(birrt_plan(env, a, b, BiRRTParams(), rng).path)
    return env, paths


def test_bsc_collinear():
    env = make_point_env()
    out = binary_state_contraction(env, np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]), 0.1)
    np.testing.assert_array_equal(out, [[1.0, 1.0], [3.0, 3.0]])


def test_bsc_two_waypoints_unchanged():
    env = make_point_env()
    path = np.array([[1.0, 1.0], [3.0, 2.0]])
    np.testing.assert_array_equal(binary_state_contraction(env, path, 0.1), path)


def test_bsc_keeps_needed_corner():
    env = make_point_env(rects=[(4.9, 2.0, 5.1, 8.0)], home=(1, 5), place=(9, 5), bin_region=(8, 4, 9.5, 6))
    path = np.array([[1.0, 5.0], [1.0, 9.0], [3.0, 9.0], [9.0, 9.0], [9.0, 5.0]])
    out = binary_state_contraction(env, path, 0.1)
    assert is_subsequence(out, path) and is_feasible(env, out, 0.1)
    # (1,5)->(3,9) is free; (3,9)->(9,5) and (1,5)->(9,9) both cross the wall
    np.testing.assert_array_equal(out, path[[0, 2, 3, 4]])


def test_bsc_rejects_infeasible():
    env = make_point_env(circles=[(5.0, 5.0, 1.0)], bin_region=(1, 1, 2, 2))
    with pytest.raises(InfeasiblePathError):
        binary_state_contraction(env, np.array([[3.0, 5.0], [7.0, 5.0]]), 0.1)


def test_bsc_on_expert_paths(expert_paths):
    env, paths = expert_paths
    for p in paths:
        out = binary_state_contraction(env, p, 0.1)
        assert is_subsequence(out, p)
        assert is_feasible(env, out, 0.1)
        assert path_length(out) <= path_length(p) + 1e-12
        assert len(out) <= len(p)
        np.testing.assert_array_equal(out[0], p[0])
        np.testing.assert_array_equal(out[-1], p[-1])


def test_resample_equal_split():
    out = resample(np.array([[0.0, 0.0], [0.5, 0.0]]), STEP)
    assert len(out) == 4
    np.testing.assert_allclose(np.diff(out[:, 0]), [0.5 / 3] * 3, atol=1e-15)


def test_resample_short_steps_unchanged():
    path = np.array([[0.0, 0.0], [0.1, 0.0], [0.1, 0.15]])
    np.testing.assert_array_equal(resample(path, STEP), path)


def test_resample_random_path_length(rng):
    for _ in range(100):
        path = rng.normal(size=(10, 4))
        out = resample(path, STEP)
        assert abs(path_length_loop(out) - path_length_loop(path)) <= 1e-9
        assert np.linalg.norm(np.diff(out, axis=0), axis=1).max() <= STEP + 1e-9
        assert is_subsequence(path, out)


def test_resample_points_on_segments(rng):
    path = rng.normal(size=(4, 3))
    out = resample(path, 0.2)
    # every inserted point is a convex combination of the segment endpoints
    for q in out:
        d = min(np.linalg.norm(np.cross(q - a, b - a)) / np.linalg.norm(b - a) for a, b in zip(path[:-1], path[1:]))
        assert d < 1e-9


def test_resample_keeps_duplicate_waypoints():
    path = np.array([[0.0, 0.0], [0.0, 0.0], [0.3, 0.0]])
    out = resample(path, STEP)
    assert len(out) == 4


def test_resample_rejects_bad_step():
    with pytest.raises(ValueError):
        resample(np.zeros((2, 2)), 0.0)


def test_post_process_straight_line():
    env = make_point_env()
    out = post_process(env, np.array([[1.0, 1.0], [1.5, 1.0], [2.0, 1.0]]), 0.1, STEP)
    assert len(out) == 7
    np.testing.assert_allclose(np.diff(out[:, 0]), 1 / 6, atol=1e-12)


def test_post_process_idempotent_on_straight_line():
    env = make_point_env()
    once = post_process(env, np.array([[1.0, 1.0], [3.0, 2.0]]), 0.1, STEP)
    twice = post_process(env, once, 0.1, STEP)
    assert len(once) == len(twice)
    assert abs(path_length(once) - path_length(twice)) < 1e-9


def test_post_process_on_expert_paths(expert_paths):
    env, paths = expert_paths
    raw_steps, pp_steps = [], []
    for p in paths:
        out = post_process(env, p, 0.1, STEP)
        assert is_feasible(env, out, 0.1)
        assert path_length(out) <= path_length(p) + 1e-9
        np.testing.assert_array_equal(out[0], p[0])
        np.testing.assert_array_equal(out[-1], p[-1])
        pp_steps.append(np.linalg.norm(np.diff(out, axis=0), axis=1))
        raw_steps.append(np.linalg.norm(np.diff(p, axis=0), axis=1))
    raw, pp = np.concatenate(raw_steps), np.concatenate(pp_steps)
    assert pp.max() <= STEP + 1e-9
    assert pp.mean() <= raw.mean() and pp.var() <= raw.var()
