"""Node placement, user drops, initial UAV/HAP paths and geometry helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .errors import DegenerateGeometryError, InfeasibleInitializationError

MASK64 = (1 << 64) - 1

# Fraction of the per-slot speed budget the initial straight path may use, so
# the optimizer starts with slack to bend the path.
INIT_SPEED_FRACTION = 0.8


def geometry(src, dst) -> tuple[float, float, float]:
    """Distance, azimuth and elevation of ``dst`` as seen from ``src``."""
    delta = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    horiz = math.hypot(delta[0], delta[1])
    dist = math.hypot(horiz, delta[2])
    if dist == 0.0:
        raise DegenerateGeometryError(f"coincident points {tuple(src)}")
    return dist, math.atan2(delta[1], delta[0]), math.atan2(delta[2], horiz)


def pair_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Broadcasted Euclidean distance between point arrays (..., 3)."""
    d = np.linalg.norm(np.asarray(a, float) - np.asarray(b, float), axis=-1)
    if np.any(d == 0.0):
        raise DegenerateGeometryError("coincident points in distance evaluation")
    return d


@dataclass(frozen=True)
class Trajectory:
    """Platform positions over the frame, shape (N, 3)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or not np.all(np.isfinite(pts)):
            raise ValueError("trajectory must be a finite (N, 3) array")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def step_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)


def trajectory_violation(points, v_max: float, delta: float, z_min: float, z_max: float,
                         start=None, end=None) -> float:
    """Largest constraint violation (meters) of a path; 0 when feasible."""
    pts = np.asarray(points, float)
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    viol = [0.0, float(np.max(steps - v_max * delta, initial=0.0)),
            float(np.max(z_min - pts[:, 2], initial=0.0)),
            float(np.max(pts[:, 2] - z_max, initial=0.0))]
    if start is not None:
        viol.append(float(np.linalg.norm(pts[0] - np.asarray(start))))
    if end is not None:
        viol.append(float(np.linalg.norm(pts[-1] - np.asarray(end))))
    return max(viol)


@dataclass(frozen=True)
class Scenario:
    config: SystemConfig
    tbs_pos: np.ndarray
    sat_pos: np.ndarray
    tbs_users: np.ndarray  # (K, 3)
    sat_users: np.ndarray  # (L, 3)
    uav_init_traj: Trajectory
    hap_init_traj: Trajectory

    def uav_violation(self, points) -> float:
        c = self.config
        t = self.uav_init_traj.points
        return trajectory_violation(points, c.v_u_max, c.slot_duration, c.z_u_min, c.z_u_max,
                                    t[0], t[-1])

    def hap_violation(self, points) -> float:
        c = self.config
        t = self.hap_init_traj.points
        return trajectory_violation(points, c.v_h_max, c.slot_duration, c.z_h_min, c.z_h_max,
                                    t[0], t[-1])


def _drop_users(rng: np.random.Generator, count: int, region) -> np.ndarray:
    x0, x1, y0, y1 = region
    xy = rng.uniform((x0, y0), (x1, y1), size=(count, 2))
    return np.column_stack([xy, np.zeros(count)])


def _straight(start: np.ndarray, end: np.ndarray, n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    pts = start[None, :] + t * (end - start)[None, :]
    pts[-1] = end
    return pts


def build_scenario(config: SystemConfig, seed: int) -> Scenario:
    """Drop users and lay out the initial straight-line flight paths."""
    c = config
    rng = np.random.default_rng(int(seed) & MASK64)
    tbs_users = _drop_users(rng, c.k_users, c.tbs_region)
    sat_users = _drop_users(rng, c.l_users, c.sat_region)
    n = c.n_slots
    hops = n - 1

    # UAV: from near the TBS toward the TBS-user centroid.
    uav_start = np.array([c.uav_start[0], c.uav_start[1], c.uav_altitude])
    if c.uav_end is not None:
        uav_end = np.array([c.uav_end[0], c.uav_end[1], c.uav_altitude])
        step = np.linalg.norm(uav_end - uav_start) / hops
        if step > c.v_u_max * c.slot_duration:
            raise InfeasibleInitializationError(
                f"scenario.uav_end: straight UAV path needs {step:.6g} m per slot, "
                f"limit is {c.v_u_max * c.slot_duration:.6g} m")
    else:
        target = np.append(tbs_users[:, :2].mean(axis=0), c.uav_altitude)
        heading = target - uav_start
        span = np.linalg.norm(heading)
        reach = min(span, INIT_SPEED_FRACTION * hops * c.v_u_max * c.slot_duration)
        uav_end = uav_start + (heading / span * reach if span > 0 else 0.0)

    # HAP: short horizontal segment centred over the SAT-user centroid.
    centre = np.append(sat_users[:, :2].mean(axis=0), c.hap_altitude)
    length = min(c.hap_path_length, INIT_SPEED_FRACTION * hops * c.v_h_max * c.slot_duration)
    ang = math.radians(c.hap_heading_deg)
    half = 0.5 * length * np.array([math.cos(ang), math.sin(ang), 0.0])

    return Scenario(
        config=c,
        tbs_pos=np.asarray(c.tbs_position, float),
        sat_pos=np.asarray(c.sat_position, float),
        tbs_users=tbs_users,
        sat_users=sat_users,
        uav_init_traj=Trajectory(_straight(uav_start, uav_end, n)),
        hap_init_traj=Trajectory(_straight(centre - half, centre + half, n)),
    )
