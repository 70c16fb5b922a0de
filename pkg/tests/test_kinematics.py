import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shelfscan import DT, RawSample, Trajectory, build_track, low_pass_positions
from shelfscan.errors import InvalidWindow, TooShort, ValidationError
from shelfscan.kinematics import fit_window, read_trajectories, split_on_gaps, wrap_angle

from conftest import make_trajectory, standing_trajectory


def brute_window_mean(xs, window):
    """Independent reference: clipped-window mean, one value per sample."""
    half = window // 2
    out = []
    for k in range(len(xs)):
        lo = max(0, k - half)
        hi = min(len(xs), k + half + 1)
        out.append(sum(xs[lo:hi]) / (hi - lo))
    return out


def test_constant_positions_unchanged():
    traj = standing_trajectory((1.0, 1.0), 0.0, 10)
    smoothed = low_pass_positions(traj, window=5)
    assert np.allclose(smoothed, np.ones((10, 2)))


def test_window_one_is_identity():
    traj = make_trajectory([(k * 0.3, -k * 0.1) for k in range(8)], [0.0] * 8)
    assert np.array_equal(low_pass_positions(traj, window=1), traj.positions)


def test_window_three_boundary_means():
    traj = make_trajectory([(x, 0.0) for x in [0, 1, 2, 3, 4]], [0.0] * 5)
    smoothed = low_pass_positions(traj, window=3)
    assert smoothed[:, 0].tolist() == [0.5, 1, 2, 3, 3.5]
    assert smoothed[:, 0].tolist() == brute_window_mean([0, 1, 2, 3, 4], 3)


@given(
    xs=st.lists(st.floats(-100, 100), min_size=3, max_size=40),
    half=st.integers(0, 6),
)
@settings(max_examples=100, deadline=None)
def test_window_mean_matches_brute_force(xs, half):
    window = 2 * half + 1
    if window > len(xs):
        window = fit_window(window, len(xs))
    traj = make_trajectory([(x, 0.0) for x in xs], [0.0] * len(xs))
    smoothed = low_pass_positions(traj, window=window)
    assert np.allclose(smoothed[:, 0], brute_window_mean(xs, window), atol=1e-9)


@pytest.mark.parametrize("window", [0, 2, 4, -1])
def test_even_or_nonpositive_window_rejected(window):
    traj = standing_trajectory((0.0, 0.0), 0.0, 10)
    with pytest.raises(InvalidWindow):
        low_pass_positions(traj, window=window)


def test_window_longer_than_data_rejected():
    traj = standing_trajectory((0.0, 0.0), 0.0, 5)
    with pytest.raises(InvalidWindow):
        low_pass_positions(traj, window=7)


def test_stationary_shopper_zero_speed():
    track = build_track(standing_trajectory((2.0, 3.0), 1.0, 12), window=5)
    assert np.allclose(track.speeds, 0.0)


def test_central_difference_speed_value():
    # 0.2 m over two steps around the middle sample: 1.0 m/s
    traj = make_trajectory([(0.0, 0.0), (0.1, 0.0), (0.2, 0.0)], [0.0] * 3)
    track = build_track(traj, window=1)
    assert track.speeds[1] == pytest.approx(1.0, abs=1e-12)


def test_uniform_motion_exact_interior_speed():
    positions = [(0.05 * k, 0.0) for k in range(20)]
    track = build_track(make_trajectory(positions, [0.0] * 20), window=1)
    assert np.allclose(track.speeds[1:-1], 0.5, atol=1e-9)
    # one-sided boundary estimates agree for linear motion too
    assert track.speeds[0] == pytest.approx(0.5, abs=1e-9)
    assert track.speeds[-1] == pytest.approx(0.5, abs=1e-9)


def test_heading_normal_from_theta():
    track = build_track(standing_trajectory((0.0, 0.0), math.pi / 2, 5), window=1)
    assert np.allclose(track.normals, [(0.0, 1.0)] * 5, atol=1e-12)


def test_normals_unit_and_counts_match():
    rng = np.random.default_rng(3)
    positions = rng.uniform(0, 10, (30, 2))
    thetas = rng.uniform(-np.pi, np.pi, 30)
    track = build_track(make_trajectory(positions, thetas), window=5)
    assert len(track) == 30
    assert np.allclose(np.hypot(track.normals[:, 0], track.normals[:, 1]), 1.0, atol=1e-9)
    assert (track.speeds >= 0).all()


def test_too_short_trajectory_rejected():
    with pytest.raises(TooShort):
        Trajectory(
            trajectory_id="x", store_id="s",
            samples=(RawSample(0.0, 0, 0, 0), RawSample(0.1, 0, 0, 0)),
        )


def test_non_uniform_step_rejected():
    samples = (
        RawSample(0.0, 0, 0, 0), RawSample(0.1, 0, 0, 0), RawSample(0.35, 0, 0, 0),
    )
    with pytest.raises(ValidationError):
        Trajectory(trajectory_id="x", store_id="s", samples=samples)


def test_theta_range_enforced():
    with pytest.raises(ValidationError):
        RawSample(0.0, 0.0, 0.0, theta=4.0)


@given(
    shift=st.tuples(st.floats(-50, 50), st.floats(-50, 50)),
    seed=st.integers(0, 10_000),
)
@settings(max_examples=50, deadline=None)
def test_translation_equivariance(shift, seed):
    rng = np.random.default_rng(seed)
    positions = rng.uniform(0, 5, (15, 2))
    thetas = rng.uniform(-np.pi, np.pi, 15)
    base = build_track(make_trajectory(positions, thetas), window=5)
    moved = build_track(make_trajectory(positions + np.array(shift), thetas), window=5)
    assert np.allclose(moved.positions - base.positions, np.array(shift), atol=1e-9)
    assert np.allclose(moved.speeds, base.speeds, atol=1e-9)


@given(angle=st.floats(-math.pi, math.pi), seed=st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_rotation_leaves_speeds_invariant(angle, seed):
    rng = np.random.default_rng(seed)
    positions = rng.uniform(-5, 5, (15, 2))
    thetas = rng.uniform(-np.pi, np.pi, 15)
    c, s = math.cos(angle), math.sin(angle)
    rotated = positions @ np.array([[c, s], [-s, c]])
    base = build_track(make_trajectory(positions, thetas), window=3)
    rot = build_track(make_trajectory(rotated, thetas), window=3)
    assert np.allclose(rot.speeds, base.speeds, atol=1e-9)


def test_wrap_angle_half_open_interval():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert -math.pi < wrap_angle(123.456) <= math.pi


def test_split_on_gaps_suffixes_and_drops():
    rows = [(k * DT, 0.0, 0.0, 0.0) for k in range(5)]
    rows += [(5 * DT + 1.0 + k * DT, 0.0, 0.0, 0.0) for k in range(4)]
    rows += [(5 * DT + 3.0, 0.0, 0.0, 0.0)]  # lone sample, dropped
    pieces = split_on_gaps("trip", "s", rows)
    assert [p.trajectory_id for p in pieces] == ["trip~0", "trip~1"]
    assert [len(p) for p in pieces] == [5, 4]


def test_split_keeps_id_when_contiguous():
    rows = [(k * DT, 1.0, 2.0, 0.0) for k in range(6)]
    pieces = split_on_gaps("trip", "s", rows)
    assert [p.trajectory_id for p in pieces] == ["trip"]


def test_read_trajectories_round_trip(tmp_path):
    path = tmp_path / "t.jsonl"
    rec = {
        "trajectory_id": "a",
        "store_id": "s",
        "samples": [[k * DT, 0.5 * k, 1.0, 0.2] for k in range(4)],
    }
    path.write_text(json.dumps(rec) + "\n")
    trajs = read_trajectories(path)
    assert len(trajs) == 1
    assert trajs[0].trajectory_id == "a"
    assert len(trajs[0]) == 4
    assert trajs[0].samples[2].x == pytest.approx(1.0)
