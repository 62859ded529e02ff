"""RIS phase design: unit-modulus quadratic assembly and Riemannian CG.

For fixed precoders and WMMSE auxiliaries the weighted MSE of either RIS tier
is ``f(v) = v^H Q v - 2 Re{q^H v} + const`` over the complex circle manifold
``|v_i| = 1``.  Everything is batched over the leading slot axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .errors import InvalidParameterError, RetractionSingularityError
from .metrics import PrecoderSet, link_powers
from .wmmse import Auxiliaries

ARMIJO_C = 1e-4
ARMIJO_SHRINK = 0.5
ARMIJO_MAX_BACKTRACKS = 30


@dataclass(frozen=True)
class QuadraticForm:
    Q: np.ndarray  # (S, N, N) Hermitian PSD
    q: np.ndarray  # (S, N)
    const: np.ndarray | None = None  # (S,) remaining weighted MSE, oracle use only

    def value(self, v) -> np.ndarray:
        return quad_value(self.Q, self.q, v)


def quad_value(Q, q, v):
    """f(v) = v^H Q v - 2 Re{q^H v}, per slot."""
    qv = np.einsum("snm,sm->sn", Q, v)
    return np.real(np.einsum("sn,sn->s", np.conj(v), qv)) - 2 * np.real(np.einsum("sn,sn->s", np.conj(q), v))


def _tier_blocks(h_ris, g_mat, w, direct):
    """Reflection vectors a[s,u,i,:] = h_ris[s,u] * conj(G w_i) and direct gains c[s,u,i]."""
    gw = np.einsum("snm,sim->sin", g_mat, w)
    a = h_ris[:, :, None, :] * np.conj(gw)[:, None, :, :]
    c = np.einsum("sum,sim->sui", direct, w)
    return a, c


def assemble_quadratic(tier: str, cs: ChannelSet, prec: PrecoderSet, aux: Auxiliaries,
                       v_other, noise_k: float, noise_l: float) -> QuadraticForm:
    """Quadratic form of the weighted MSE in the phases of one RIS tier.

    ``tier`` is ``"uav"`` or ``"hap"``; ``v_other`` holds the frozen phases of
    the other tier, entering only through ``const``.
    """
    if tier == "uav":
        # served users: TBS users through h_tr; victims: SAT users through g_TBS->l
        srv = _tier_blocks(cs.u_k, cs.tbs_u, prec.w_b, cs.tbs_k)
        vic = _tier_blocks(cs.u_l, cs.tbs_u, prec.w_b, cs.tbs_l)
        u_s, om_s, u_v, om_v = aux.u_k, aux.omega_k, aux.u_l, aux.omega_l
    elif tier == "hap":
        srv = _tier_blocks(cs.h_l, cs.sat_h, prec.w_s, cs.sat_l)
        vic = _tier_blocks(cs.h_k, cs.sat_h, prec.w_s, cs.sat_k)
        u_s, om_s, u_v, om_v = aux.u_l, aux.omega_l, aux.u_k, aux.omega_k
    else:
        raise InvalidParameterError(f"unknown RIS tier {tier!r}")
    a, c = srv
    av, cv = vic
    if a.shape[0] != u_s.shape[0] or a.shape[1] != u_s.shape[1]:
        raise InvalidParameterError("auxiliaries do not match the channel dimensions")
    ws = om_s * np.abs(u_s) ** 2  # (S, U)
    wv = om_v * np.abs(u_v) ** 2
    Q = (np.einsum("su,suin,suim->snm", ws, a, np.conj(a))
         + np.einsum("su,suin,suim->snm", wv, av, np.conj(av)))
    n_users = a.shape[1]
    idx = np.arange(n_users)
    a_own = a[:, idx, idx, :]  # (S, U, N) reflection vector of each user's own stream
    q = (np.einsum("su,sun->sn", om_s * u_s, a_own)
         - np.einsum("su,sui,suin->sn", ws, c, a)
         - np.einsum("su,sui,suin->sn", wv, cv, av))
    Q = 0.5 * (Q + np.conj(np.swapaxes(Q, 1, 2)))

    # constant part: every weighted-MSE term of the served users that does not
    # depend on v, plus the victims' leakage from this station at v = 0
    c_own = c[:, idx, idx]
    if tier == "uav":
        other = np.einsum("skm,slm->skl", _cross(cs.sat_k, cs.h_k, cs.sat_h, v_other), prec.w_s)
        noise = noise_k
    else:
        other = np.einsum("slm,skm->slk", _cross(cs.tbs_l, cs.u_l, cs.tbs_u, v_other), prec.w_b)
        noise = noise_l
    const = np.sum(om_s * (np.abs(u_s) ** 2 * (np.sum(np.abs(c) ** 2, axis=2)
                                             + np.sum(np.abs(other) ** 2, axis=2) + noise)
                           - 2 * np.real(np.conj(u_s) * c_own) + 1.0), axis=1)
    const = const + np.sum(wv * np.sum(np.abs(cv) ** 2, axis=2), axis=1)
    return QuadraticForm(Q, q, const)


def _cross(direct, h_ris, g_mat, v):
    v = np.asarray(v, complex).reshape(direct.shape[0], -1)
    return direct + np.einsum("sun,sn,snm->sum", np.conj(h_ris), v, g_mat)


def tier_weighted_mse(tier: str, eff, prec: PrecoderSet, aux: Auxiliaries, noise_k: float, noise_l: float):
    """The v-dependent slice of the total weighted MSE that the quadratic models.

    UAV tier: sum_k omega_k e_k + sum_l omega_l |u_l|^2 sum_i |g_TBS->l w_b,i|^2.
    """
    lp = link_powers(eff, prec, noise_k, noise_l)
    ek = np.abs(aux.u_k) ** 2 * lp.total_k - 2 * np.real(np.conj(aux.u_k) * lp.signal_k) + 1
    el = np.abs(aux.u_l) ** 2 * lp.total_l - 2 * np.real(np.conj(aux.u_l) * lp.signal_l) + 1
    if tier == "uav":
        leak = np.sum(np.abs(np.einsum("slm,skm->slk", eff.g_tl, prec.w_b)) ** 2, axis=2)
        return np.sum(aux.omega_k * ek, axis=1) + np.sum(aux.omega_l * np.abs(aux.u_l) ** 2 * leak, axis=1)
    leak = np.sum(np.abs(np.einsum("skm,slm->skl", eff.g_sk, prec.w_s)) ** 2, axis=2)
    return np.sum(aux.omega_l * el, axis=1) + np.sum(aux.omega_k * np.abs(aux.u_k) ** 2 * leak, axis=1)


# --- manifold machinery ----------------------------------------------------------

def _inner(a, b):
    """Real inner product Re sum conj(a) b per slot."""
    return np.real(np.einsum("sn,sn->s", np.conj(a), b))


def euclidean_gradient(Q, q, v):
    return 2.0 * np.einsum("snm,sm->sn", Q, v) - 2.0 * q


def tangent_project(x, v):
    return x - np.real(x * np.conj(v)) * v


def riemannian_gradient(Q, q, v):
    """Projection of 2Qv - 2q onto the tangent space at v."""
    Q = np.asarray(Q, complex)
    q = np.asarray(q, complex)
    v = np.asarray(v, complex)
    single = v.ndim == 1
    if single:
        Q, q, v = Q[None], q[None], v[None]
    g = tangent_project(euclidean_gradient(Q, q, v), v)
    return g[0] if single else g


def retract(v, step, direction):
    """Elementwise normalization of v + step * direction."""
    raw = v + np.asarray(step)[..., None] * direction if np.ndim(step) else v + step * direction
    mag = np.abs(raw)
    if np.any(mag == 0):
        raise RetractionSingularityError("retraction through the origin")
    # a zero step returns v untouched rather than v/|v| (which may round)
    still = np.broadcast_to(np.asarray(step) == 0, raw.shape[:-1])[..., None]
    return np.where(still, v, raw / mag)


def retract_and_transport(v, step, direction, prev_direction):
    v_new = retract(np.asarray(v, complex), step, np.asarray(direction, complex))
    return v_new, tangent_project(np.asarray(prev_direction, complex), v_new)


@dataclass
class RcgResult:
    v: np.ndarray
    iterations: np.ndarray
    values: list  # per-iteration objective arrays (S,)
    grad_norm: np.ndarray


def _phase_of(x):
    mag = np.abs(x)
    return np.where(mag > 0, x / np.where(mag > 0, mag, 1.0), 1.0)


def extra_starts(Q, q, ridge: float = 1e-3):
    """Two data-driven starting points: the phases of q (optimal when Q is
    diagonal) and the phases of the ridge-regularized unconstrained minimizer."""
    n = q.shape[1]
    tr = np.real(np.trace(Q, axis1=1, axis2=2))
    reg = Q + (ridge * np.where(tr > 0, tr, 1.0))[:, None, None] * np.eye(n)
    return [_phase_of(q), _phase_of(np.linalg.solve(reg, q[..., None])[..., 0])]


def rcg_minimize(Q, q, v0, eps_m: float = 1e-6, t_max_m: int = 200, multi_start: bool = True) -> RcgResult:
    """Riemannian conjugate gradient (Polak-Ribiere+, Armijo) on |v_i| = 1.

    Q and q are rescaled per slot by a common positive factor so the stopping
    tolerance and the unit initial step are independent of channel scale.
    The problem is non-convex; with ``multi_start`` the solver also runs from
    the points of ``extra_starts`` and keeps, per slot, the best result (the
    run from ``v0`` wins ties, so the result never exceeds f(v0)).
    """
    Q = np.asarray(Q, complex)
    q = np.asarray(q, complex)
    v = np.array(v0, dtype=complex)
    single = v.ndim == 1
    if single:
        Q, q, v = Q[None], q[None], v[None]
    s, n = v.shape
    if n == 0:
        res = RcgResult(v, np.zeros(s, dtype=int), [np.zeros(s)], np.zeros(s))
        return _squeeze(res) if single else res
    scale = np.maximum(np.linalg.norm(Q, axis=(1, 2)), np.linalg.norm(q, axis=1))
    scale = np.where(scale > 0, scale, 1.0)
    Qn = Q / scale[:, None, None]
    qn = q / scale[:, None]
    starts = [v] + (extra_starts(Qn, qn) if multi_start else [])
    m = len(starts)
    v_all, iters, values, gnorm = _rcg_core(np.concatenate([Qn] * m), np.concatenate([qn] * m),
                                            np.concatenate(starts), eps_m, t_max_m)
    final = values[-1].reshape(m, s)
    pick = np.zeros(s, dtype=int)
    for j in range(1, m):
        better = final[j] < final[pick, np.arange(s)] - 1e-12 * np.maximum(1.0, np.abs(final[0]))
        pick = np.where(better, j, pick)
    rows = pick * s + np.arange(s)
    res = RcgResult(v_all[rows], iters[rows], [x[rows] * scale for x in values], gnorm[rows] * scale)
    return _squeeze(res) if single else res


def _rcg_core(Qn, qn, v, eps_m, t_max_m):
    s = v.shape[0]
    iters = np.zeros(s, dtype=int)
    f = quad_value(Qn, qn, v)
    g = tangent_project(euclidean_gradient(Qn, qn, v), v)
    d = -g
    active = np.ones(s, dtype=bool)
    values = [f]
    for _ in range(t_max_m):
        gnorm = np.linalg.norm(g, axis=1)
        active &= gnorm > eps_m
        if not np.any(active):
            break
        slope = _inner(g, d)
        # fall back to steepest descent when d is not a descent direction
        bad = slope >= 0
        d = np.where(bad[:, None], -g, d)
        slope = np.where(bad, -gnorm ** 2, slope)

        step = np.where(active, 1.0, 0.0)
        todo = active.copy()
        v_try = v.copy()
        f_try = f.copy()
        for _ in range(ARMIJO_MAX_BACKTRACKS + 1):
            cand = v[todo] + step[todo, None] * d[todo]
            mag = np.abs(cand)
            singular = np.any(mag == 0, axis=1)  # retraction through the origin: shrink
            cand = cand / np.where(mag == 0, 1.0, mag)
            fc = quad_value(Qn[todo], qn[todo], cand)
            ok = (fc <= f[todo] + ARMIJO_C * step[todo] * slope[todo]) & ~singular
            ids = np.flatnonzero(todo)
            v_try[ids[ok]] = cand[ok]
            f_try[ids[ok]] = fc[ok]
            todo[ids[ok]] = False
            if not np.any(todo):
                break
            step = np.where(todo, step * ARMIJO_SHRINK, step)
        moved = active & ~todo
        # slots with no acceptable step are stationary to working precision
        active &= moved
        iters += moved
        v_new = np.where(moved[:, None], v_try, v)
        f = np.where(moved, f_try, f)
        g_new = tangent_project(euclidean_gradient(Qn, qn, v_new), v_new)
        g_old_t = tangent_project(g, v_new)
        d_t = tangent_project(d, v_new)
        denom = np.sum(np.abs(g) ** 2, axis=1)
        beta = _inner(g_new, g_new - g_old_t) / np.where(denom > 0, denom, 1.0)
        beta = np.maximum(beta, 0.0)
        d = np.where(moved[:, None], -g_new + beta[:, None] * d_t, d)
        g = np.where(moved[:, None], g_new, g)
        v = v_new
        values.append(f)
    return v, iters, values, np.linalg.norm(g, axis=1)


def _squeeze(res: RcgResult) -> RcgResult:
    return RcgResult(res.v[0], res.iterations[0], [x[0] for x in res.values], res.grad_norm[0])
