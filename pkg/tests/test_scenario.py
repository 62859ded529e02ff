import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aris.config import SystemConfig
from aris.errors import DegenerateGeometryError, InfeasibleInitializationError
from aris.scenario import Trajectory, build_scenario, geometry, pair_distances, trajectory_violation


def test_geometry_right_triangle():
    d, az, el = geometry((0, 0, 0), (300, 400, 0))
    assert d == pytest.approx(500.0, abs=1e-12)
    assert el == 0.0
    assert az == pytest.approx(math.atan2(400, 300))


def test_geometry_vertical():
    assert geometry((0, 0, 0), (0, 0, 100))[2] == pytest.approx(math.pi / 2)


def test_geometry_diagonal():
    d, az, _ = geometry((0, 0, 0), (1, 1, 0))
    assert d == pytest.approx(math.sqrt(2))
    assert az == pytest.approx(math.pi / 4)


def test_geometry_coincident_raises():
    with pytest.raises(DegenerateGeometryError):
        geometry((1, 2, 3), (1, 2, 3))
    with pytest.raises(DegenerateGeometryError):
        pair_distances(np.zeros((2, 3)), np.zeros((2, 3)))


coord = st.floats(-1e4, 1e4, allow_nan=False)


@given(st.tuples(coord, coord, coord), st.tuples(coord, coord, coord))
def test_geometry_distance_symmetric(a, b):
    if np.allclose(a, b, atol=1e-9):
        return
    assert geometry(a, b)[0] == pytest.approx(geometry(b, a)[0], rel=1e-12)


def test_build_scenario_deterministic():
    c = SystemConfig()
    a, b = build_scenario(c, 7), build_scenario(c, 7)
    for name in ("tbs_users", "sat_users"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
    assert a.uav_init_traj.points.tobytes() == b.uav_init_traj.points.tobytes()
    assert a.hap_init_traj.points.tobytes() == b.hap_init_traj.points.tobytes()
    assert not np.array_equal(build_scenario(c, 8).tbs_users, a.tbs_users)


def test_users_in_regions():
    sc = build_scenario(SystemConfig(), 3)
    assert sc.tbs_users.shape == (3, 3)
    assert np.all((sc.tbs_users[:, 0] >= 150) & (sc.tbs_users[:, 0] <= 400))
    assert np.all((sc.tbs_users[:, 1] >= 130) & (sc.tbs_users[:, 1] <= 400))
    assert np.all((sc.sat_users[:, 0] >= 1100) & (sc.sat_users[:, 0] <= 1400))
    assert np.all((sc.sat_users[:, 1] >= 600) & (sc.sat_users[:, 1] <= 900))
    assert np.all(sc.tbs_users[:, 2] == 0) and np.all(sc.sat_users[:, 2] == 0)


def test_hap_steps_within_speed():
    c = SystemConfig(n_slots=60)
    sc = build_scenario(c, 11)
    assert np.all(sc.hap_init_traj.step_lengths() <= 5.0)
    assert np.all(sc.hap_init_traj.points[:, 2] == 21e3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.integers(2, 80))
def test_initial_trajectories_feasible(seed, n_slots):
    sc = build_scenario(SystemConfig(n_slots=n_slots), seed)
    assert sc.uav_violation(sc.uav_init_traj.points) == 0.0
    assert sc.hap_violation(sc.hap_init_traj.points) == 0.0
    assert len(sc.uav_init_traj) == n_slots
    assert np.all(sc.uav_init_traj.points[:, 2] == 165.0)


def test_uav_heads_toward_user_centroid():
    sc = build_scenario(SystemConfig(), 5)
    pts = sc.uav_init_traj.points
    heading = pts[-1, :2] - pts[0, :2]
    target = sc.tbs_users[:, :2].mean(axis=0) - pts[0, :2]
    cos = heading @ target / np.linalg.norm(heading) / np.linalg.norm(target)
    assert cos == pytest.approx(1.0, abs=1e-12)


def test_infeasible_uav_end_rejected():
    c = SystemConfig(n_slots=3, uav_end=(5000.0, 5000.0))
    with pytest.raises(InfeasibleInitializationError, match="uav_end"):
        build_scenario(c, 1)


def test_trajectory_is_read_only():
    t = Trajectory(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        t.points[0, 0] = 1.0
    with pytest.raises(ValueError):
        Trajectory(np.zeros((3, 2)))


def test_trajectory_violation_reports_worst_breach():
    pts = np.array([[0, 0, 100], [40, 0, 100], [40, 0, 300]], float)
    # speed breach 10 m, then 170 m; altitude breach 50 m
    assert trajectory_violation(pts, 30, 1, 80, 250) == pytest.approx(170.0)
    assert trajectory_violation(pts[:2], 30, 1, 80, 250, start=(0, 0, 100)) == pytest.approx(10.0)
