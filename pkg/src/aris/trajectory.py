"""UAV/HAP trajectory design by successive convex approximation.

The cascaded received power of a user is ``C * d1**-g1 * d2**-g2`` with d1
the station-platform distance and d2 the platform-user distance.  Around the
current path it is replaced by an affine surrogate (first-order Taylor in
(d1, d2) composed with linearized norms), interference is frozen, and the
resulting subproblem is solved by projected gradient ascent with a Dykstra
projection onto the speed/altitude constraints.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import ChannelSet, EffectiveChannels, cascade
from .errors import DegenerateGeometryError
from .metrics import PrecoderSet, evaluate_rates, link_powers

LN2 = math.log(2.0)
FEAS_TOL = 1e-8
SUFFICIENT_INCREASE = 1e-4
MAX_HALVINGS = 40
DAMP_ATTEMPTS = 5
CHECK_EVERY = 4  # Dykstra sweeps between feasibility checks
COARSE_TOL = 1e-4  # Dykstra tolerance, relative to v_max*delta, before the pull-back


# --- cascade constant and surrogate ------------------------------------------------

def cascade_powers(tier: str, cs: ChannelSet, prec: PrecoderSet, v) -> np.ndarray:
    """|RIS-path gain * own precoder|^2 per (slot, served user)."""
    v = np.asarray(v, complex).reshape(cs.n_slots, -1)
    if tier == "uav":
        return np.abs(np.einsum("skm,skm->sk", cascade(cs.u_k, v, cs.tbs_u), prec.w_b)) ** 2
    return np.abs(np.einsum("slm,slm->sl", cascade(cs.h_l, v, cs.sat_h), prec.w_s)) ** 2


def _distances(q, anchor1, anchors2):
    d1 = np.linalg.norm(q - anchor1[None, :], axis=1)  # (S,)
    d2 = np.linalg.norm(q[:, None, :] - anchors2[None, :, :], axis=2)  # (S, U)
    if np.any(d1 == 0) or np.any(d2 == 0):
        raise DegenerateGeometryError("platform coincides with a station or user")
    return d1, d2


def extract_cascade_constant(power, q, anchor1, anchors2, gammas) -> np.ndarray:
    """C = p / (d1^-g1 d2^-g2) at the current positions; zero power gives C = 0."""
    d1, d2 = _distances(np.asarray(q, float), np.asarray(anchor1, float), np.asarray(anchors2, float))
    g1, g2 = gammas
    return np.asarray(power) * d1[:, None] ** g1 * d2 ** g2


@dataclass(frozen=True)
class SurrogateCoefficients:
    """Affine model p_hat(q[n]) = value[n,u] + grad[n,u] . (q[n] - expansion[n])."""

    value: np.ndarray  # (S, U) watts, equals C h at the expansion point
    grad: np.ndarray  # (S, U, 3) watts per meter
    expansion: np.ndarray  # (S, 3)
    C: np.ndarray  # (S, U)
    h: np.ndarray
    h_d1: np.ndarray
    h_d2: np.ndarray
    anchor1: np.ndarray
    anchors2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    def evaluate(self, q) -> np.ndarray:
        """Surrogate power at positions q (S, 3), via the linearized distances."""
        q = np.asarray(q, float)
        e = self.expansion
        lin1 = np.einsum("sj,sj->s", e - self.anchor1, q - self.anchor1) / self.d1
        rel_e = e[:, None, :] - self.anchors2[None]
        rel_q = q[:, None, :] - self.anchors2[None]
        lin2 = np.einsum("suj,suj->su", rel_e, rel_q) / self.d2
        return self.C * (self.h + self.h_d1 * (lin1 - self.d1)[:, None] + self.h_d2 * (lin2 - self.d2))


def build_surrogate(C, anchor1, anchors2, expansion, gammas) -> SurrogateCoefficients:
    anchor1 = np.asarray(anchor1, float)
    anchors2 = np.asarray(anchors2, float)
    q = np.asarray(expansion, float)
    d1, d2 = _distances(q, anchor1, anchors2)
    g1, g2 = gammas
    D1 = d1[:, None]
    h = D1 ** -g1 * d2 ** -g2
    h_d1 = -g1 * D1 ** (-g1 - 1) * d2 ** -g2
    h_d2 = -g2 * D1 ** -g1 * d2 ** (-g2 - 1)
    u1 = (q - anchor1) / d1[:, None]  # (S, 3)
    u2 = (q[:, None, :] - anchors2[None]) / d2[..., None]  # (S, U, 3)
    C = np.asarray(C, float)
    grad = C[..., None] * (h_d1[..., None] * u1[:, None, :] + h_d2[..., None] * u2)
    return SurrogateCoefficients(C * h, grad, q, C, h, h_d1, h_d2, anchor1, anchors2, d1, d2)


def surrogate_objective(sur: SurrogateCoefficients, interference, p_direct, q):
    """(1/N) sum log2(1 + (p_direct + max(p_hat, 0)) / I) and its gradient in q."""
    q = np.asarray(q, float)
    s = q.shape[0]
    p_hat = sur.value + np.einsum("suj,sj->su", sur.grad, q - sur.expansion)
    pc = np.maximum(p_hat, 0.0)
    denom = interference + p_direct + pc
    value = float(np.sum(np.log2(denom / interference)) / s)
    weight = np.where(p_hat > 0, 1.0 / (denom * LN2), 0.0)
    grad = np.einsum("su,suj->sj", weight, sur.grad) / s
    return value, grad


# --- projection onto the mobility constraints --------------------------------------

def _pair_project(x, j, r):
    """Project the disjoint pairs (j, j+1) onto ||x[j+1] - x[j]|| <= r, in place.

    Fixed endpoints stay put; the free partner absorbs the whole correction.
    """
    n = x.shape[0]
    a, b = x[j], x[j + 1]
    diff = b - a
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    over = dist > r
    if not over.any():
        return
    j, a, b, diff, dist = j[over], a[over], b[over], diff[over], dist[over]
    excess = (1.0 - r / dist)[:, None] * diff  # displacement that closes the gap
    share_a = np.where(j == 0, 0.0, np.where(j + 1 == n - 1, 1.0, 0.5))[:, None]
    x[j] = a + share_a * excess
    x[j + 1] = b - (1.0 - share_a) * excess


def _violation(x, r, z_min, z_max):
    d = np.diff(x, axis=0)
    steps = np.sqrt(np.einsum("ij,ij->i", d, d))
    z = x[1:-1, 2]
    return max(float(np.max(steps - r, initial=0.0)),
               float(np.max(z_min - z, initial=0.0)),
               float(np.max(z - z_max, initial=0.0)))


def project_trajectory(points, v_max: float, delta: float, z_min: float, z_max: float,
                       max_sweeps: int = 500, tol: float = FEAS_TOL):
    """Dykstra projection of a path onto speed balls and altitude box.

    The first and last points are fixed. Returns ``(points, converged)``.
    """
    x = np.array(points, dtype=float)
    n = x.shape[0]
    r = v_max * delta
    if _violation(x, r, z_min, z_max) <= tol:
        return x, True
    if n < 3:
        return x, False  # nothing is free to move
    even = np.arange(0, n - 1, 2)
    odd = np.arange(1, n - 1, 2)
    inc = [np.zeros_like(x) for _ in range(3)]
    for sweep in range(1, max_sweeps + 1):
        for i in range(3):
            y = x + inc[i]
            x = y.copy()
            if i == 2:
                x[1:-1, 2] = np.clip(x[1:-1, 2], z_min, z_max)
            else:
                _pair_project(x, even if i == 0 else odd, r)
            inc[i] = y - x
        if (sweep % CHECK_EVERY == 0 or sweep == max_sweeps) and _violation(x, r, z_min, z_max) <= tol:
            return x, True
    return x, False


def pull_back(points, anchor, r, z_min, z_max, tol: float = FEAS_TOL, steps: int = 60):
    """Largest feasible point on the segment from a feasible anchor toward points.

    Returns ``(points, feasible)``.  The search targets ``tol / 2`` so that
    round-off in later convex combinations cannot push an iterate past
    ``tol``; an anchor that is itself infeasible is returned unchanged.
    """
    x = np.asarray(points, float)
    anchor = np.asarray(anchor, float)
    target = 0.5 * tol
    if _violation(x, r, z_min, z_max) <= target:
        return x, True
    if _violation(anchor, r, z_min, z_max) > tol:
        return anchor.copy(), False
    lo, hi = 0.0, 1.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if _violation(anchor + mid * (x - anchor), r, z_min, z_max) <= target:
            lo = mid
        else:
            hi = mid
    return anchor + lo * (x - anchor), True


# --- convex subproblem -------------------------------------------------------------

@dataclass
class SubproblemResult:
    points: np.ndarray
    value: float
    iterations: int
    values: list
    reduced_precision: bool = False


def solve_trajectory_subproblem(objective: Callable, q_start, project: Callable, v_max: float,
                                delta: float, max_iter: int = 300, rel_tol: float = 1e-6,
                                step_tol: float = 1e-6) -> SubproblemResult:
    """Projected gradient ascent on ``objective(q) -> (value, grad)``.

    The ascent direction is the gradient rescaled so that a unit step moves
    the point with the largest gradient by ``v_max * delta``; the step is then
    halved until sufficient increase holds, and the next trial step starts at
    twice the accepted one.  Stops when an iteration gains less than
    ``rel_tol`` (relative) or moves less than ``step_tol`` meters, when no
    increasing step exists, or after ``max_iter``.
    """
    x = np.array(q_start, dtype=float)
    val, grad = objective(x)
    free = np.ones((x.shape[0], 1))
    free[0] = free[-1] = 0.0  # endpoints are fixed
    grad = grad * free
    values = [val]
    reduced = False
    it = 0
    t = 1.0
    for it in range(1, max_iter + 1):
        gmax = float(np.max(np.linalg.norm(grad, axis=1)))
        if not gmax > 0:
            break
        direction = grad * (v_max * delta / gmax)
        accepted = False
        for _ in range(MAX_HALVINGS):
            cand, ok = project(x + t * direction, x)
            reduced |= not ok
            c_val, c_grad = objective(cand)
            if c_val >= val + SUFFICIENT_INCREASE * float(np.sum(grad * (cand - x))) and c_val >= val:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        move = float(np.max(np.linalg.norm(cand - x, axis=1)))
        gain = c_val - val
        x, val, grad = cand, c_val, c_grad * free
        values.append(val)
        if gain <= rel_tol * max(abs(val), 1e-300) or move <= step_tol:
            break
        t = min(1.0, 2.0 * t)
    return SubproblemResult(x, val, it, values, reduced)


# --- outer SCA loop ----------------------------------------------------------------

@dataclass
class ScaProblem:
    """Everything the SCA loop needs besides the positions.

    ``channels(uav, hap)`` realizes the frozen fading at the given paths and
    ``effective(cs)`` composes it with the (fixed) RIS phases.
    """

    channels: Callable[[np.ndarray, np.ndarray], ChannelSet]
    effective: Callable[[ChannelSet], EffectiveChannels]
    precoders: PrecoderSet
    v_u: np.ndarray
    v_h: np.ndarray
    noise_k: float
    noise_l: float
    tbs_pos: np.ndarray
    sat_pos: np.ndarray
    tbs_users: np.ndarray
    sat_users: np.ndarray
    uav_gammas: tuple
    hap_gammas: tuple = (2.0, 2.0)
    include_direct: bool = True

    def true_objective(self, uav, hap) -> float:
        eff = self.effective(self.channels(uav, hap))
        return evaluate_rates(eff, self.precoders, self.noise_k, self.noise_l).average


@dataclass(frozen=True)
class PlatformLimits:
    v_max: float
    delta: float
    z_min: float
    z_max: float
    eps_q: float
    max_sweeps: int = 500
    pgd_max_iter: int = 300

    def project(self, pts, anchor=None):
        """Projection onto the constraints, pulled back toward a feasible anchor.

        With an anchor, Dykstra only runs to ``COARSE_TOL`` and the residual
        violation is removed by moving back along the segment to the anchor
        (the feasible set is convex, so a feasible point exists on it).
        """
        tol = FEAS_TOL if anchor is None else COARSE_TOL * self.v_max * self.delta
        x, ok = project_trajectory(pts, self.v_max, self.delta, self.z_min, self.z_max,
                                   self.max_sweeps, tol)
        if anchor is None:
            return x, ok
        return pull_back(x, anchor, self.v_max * self.delta, self.z_min, self.z_max)


@dataclass
class ScaResult:
    uav: np.ndarray
    hap: np.ndarray
    objective: list  # true objective at each accepted iterate (first entry: start)
    iterations: int
    reduced_precision: bool = False
    surrogate_values: list = field(default_factory=list)


def platform_surrogate(tier: str, prob: ScaProblem, cs: ChannelSet, eff: EffectiveChannels,
                       q) -> tuple[SurrogateCoefficients, np.ndarray, np.ndarray]:
    """Surrogate coefficients plus frozen interference and direct power for one platform."""
    lp = link_powers(eff, prob.precoders, prob.noise_k, prob.noise_l)
    if tier == "uav":
        power = cascade_powers("uav", cs, prob.precoders, prob.v_u)
        direct = np.abs(np.einsum("skm,skm->sk", cs.tbs_k, prob.precoders.w_b)) ** 2
        anchor1, anchors2, gammas, ipn = prob.tbs_pos, prob.tbs_users, prob.uav_gammas, lp.ipn_k
    else:
        power = cascade_powers("hap", cs, prob.precoders, prob.v_h)
        direct = np.abs(np.einsum("slm,slm->sl", cs.sat_l, prob.precoders.w_s)) ** 2
        anchor1, anchors2, gammas, ipn = prob.sat_pos, prob.sat_users, prob.hap_gammas, lp.ipn_l
    C = extract_cascade_constant(power, q, anchor1, anchors2, gammas)
    sur = build_surrogate(C, anchor1, anchors2, q, gammas)
    if not prob.include_direct:
        direct = np.zeros_like(direct)
    return sur, ipn, direct


def sca_optimize(prob: ScaProblem, uav0, hap0, uav_limits: PlatformLimits, hap_limits: PlatformLimits,
                 t_max_q: int = 30, move_uav: bool = True, move_hap: bool = True) -> ScaResult:
    """Safeguarded SCA over both platform paths (endpoints fixed)."""
    uav = np.array(uav0, dtype=float)
    hap = np.array(hap0, dtype=float)
    best = prob.true_objective(uav, hap)
    history = [best]
    sur_hist = []
    reduced = False
    it = 0
    for it in range(1, t_max_q + 1):
        cs = prob.channels(uav, hap)
        eff = prob.effective(cs)
        cand = {"uav": uav, "hap": hap}
        for tier, q, lim, on in (("uav", uav, uav_limits, move_uav), ("hap", hap, hap_limits, move_hap)):
            if not on or q.shape[0] < 3:
                continue
            sur, ipn, direct = platform_surrogate(tier, prob, cs, eff, q)
            if not np.any(sur.C > 0):
                continue  # no cascade power: nothing to gain from moving
            res = solve_trajectory_subproblem(
                lambda x, s=sur, i=ipn, d=direct: surrogate_objective(s, i, d, x),
                q, lim.project, lim.v_max, lim.delta, max_iter=lim.pgd_max_iter)
            reduced |= res.reduced_precision
            sur_hist.append((tier, res.values[0], res.value))
            cand[tier] = res.points
        new_u, new_h = cand["uav"], cand["hap"]
        if new_u is uav and new_h is hap:
            break
        accepted = False
        for _ in range(DAMP_ATTEMPTS + 1):
            val = prob.true_objective(new_u, new_h)
            if val >= best:
                accepted = True
                break
            # averaging with the current feasible path keeps feasibility (convex set)
            new_u = 0.5 * (new_u + uav)
            new_h = 0.5 * (new_h + hap)
        if not accepted:
            break
        move_u = float(np.linalg.norm(new_u - uav))
        move_h = float(np.linalg.norm(new_h - hap))
        uav, hap, best = new_u, new_h, val
        history.append(best)
        if move_u <= uav_limits.eps_q and move_h <= hap_limits.eps_q:
            break
    return ScaResult(uav, hap, history, it, reduced, sur_hist)


def trajectory_to_csv(uav, hap, header: bool = True, prefix: list | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    pre = prefix or []
    if header:
        w.writerow([p[0] for p in pre] + ["slot", "platform", "x", "y", "z"])
    for name, pts in (("uav", uav), ("hap", hap)):
        for n, p in enumerate(np.asarray(pts)):
            w.writerow([p_[1] for p_ in pre] + [n, name] + [format(float(c), ".17g") for c in p])
    return buf.getvalue()
