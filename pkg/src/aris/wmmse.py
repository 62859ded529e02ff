"""WMMSE precoding for fixed RIS phases and platform positions.

Each slot is solved independently; all routines are batched over the leading
slot axis.  Equalizer convention: ``u = h w / T`` and
``e = |u|^2 T - 2 Re{conj(u) h w} + 1``, which makes the precoder right-hand
side ``b = omega * u * h^H``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .channel import EffectiveChannels
from .errors import NumericalBreakdownError
from .metrics import PrecoderSet, evaluate_rates, link_powers, weighted_mse

BISECTION_STEPS = 64
NULL_REL = 1e-12  # eigenvalues below this fraction of the largest count as zero


@dataclass(frozen=True)
class Auxiliaries:
    u_k: np.ndarray  # (S, K) complex equalizers
    u_l: np.ndarray  # (S, L)
    omega_k: np.ndarray  # (S, K) weights 1/e
    omega_l: np.ndarray
    e_k: np.ndarray  # (S, K) MSE at the optimal equalizer
    e_l: np.ndarray


def update_auxiliaries(eff: EffectiveChannels, prec: PrecoderSet, noise_k: float, noise_l: float) -> Auxiliaries:
    """Optimal MMSE equalizers and weights for the given precoders."""
    lp = link_powers(eff, prec, noise_k, noise_l)
    tk, tl = lp.total_k, lp.total_l
    # e* = 1 - |hw|^2/T written as (T - |hw|^2)/T to avoid cancellation
    e_k = lp.ipn_k / tk
    e_l = lp.ipn_l / tl
    for e in (e_k, e_l):
        if e.size and (not np.all(np.isfinite(e)) or np.any(e <= 0)):
            raise NumericalBreakdownError("non-positive or non-finite MSE")
    return Auxiliaries(lp.signal_k / tk, lp.signal_l / tl, 1.0 / e_k, 1.0 / e_l, e_k, e_l)


def _power_curve(evals, coef2, lam):
    """sum_m coef2 / (evals + lam)^2 for batched (S, M) inputs and (S,) lam."""
    return np.sum(coef2 / (evals + lam[:, None]) ** 2, axis=1)


def _power_at_zero(evals, coef2):
    thr = NULL_REL * np.max(np.abs(evals), axis=1, keepdims=True)
    null = evals <= thr
    total = coef2.sum(axis=1)
    leak = np.where(null, coef2, 0.0).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        p0 = np.where(null, 0.0, coef2 / np.where(null, 1.0, evals) ** 2).sum(axis=1)
    # energy in the null space of A cannot be served at lambda = 0
    p0 = np.where(leak > 1e-20 * total, np.inf, p0)
    return p0, null


def _bisect(evals, coef2, power):
    """Multiplier per slot meeting the power budget (0 when slack)."""
    s = evals.shape[0]
    p0, _ = _power_at_zero(evals, coef2)
    lam = np.zeros(s)
    need = (p0 > power) & (coef2.sum(axis=1) > 0)
    if not np.any(need):
        return lam
    ev, c2 = evals[need], coef2[need]
    hi = np.ones(ev.shape[0])
    for _ in range(400):
        over = _power_curve(ev, c2, hi) > power
        if not np.any(over):
            break
        hi = np.where(over, hi * 10.0, hi)
    lo = np.zeros_like(hi)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        over = _power_curve(ev, c2, mid) > power
        lo = np.where(over, mid, lo)
        hi = np.where(over, hi, mid)
    lam[need] = hi  # feasible end of the bracket
    return lam


def _eig(a):
    a = 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))
    evals, vecs = np.linalg.eigh(a)
    return np.clip(evals, 0.0, None), vecs


def bisection_power(a, b_set, power: float) -> float | np.ndarray:
    """Smallest ``lam >= 0`` with ``sum ||(A + lam I)^-1 b||^2 <= P``.

    ``a`` is (M, M) or batched (S, M, M); ``b_set`` is (K, M) or (S, K, M).
    """
    a = np.asarray(a, complex)
    b = np.asarray(b_set, complex)
    single = a.ndim == 2
    if single:
        a, b = a[None], b[None]
    evals, vecs = _eig(a)
    coef2 = np.sum(np.abs(np.einsum("smn,skm->skn", np.conj(vecs), b)) ** 2, axis=1)
    lam = _bisect(evals, coef2, power)
    return float(lam[0]) if single else lam


def _solve_station(a, b, power):
    """w_k = (A + lam I)^-1 b_k with lam from bisection; returns (W, lam)."""
    if not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
        raise NumericalBreakdownError("non-finite precoder system")
    evals, vecs = _eig(a)
    proj = np.einsum("smn,skm->skn", np.conj(vecs), b)  # U^H b
    coef2 = np.sum(np.abs(proj) ** 2, axis=1)
    lam = _bisect(evals, coef2, power)
    denom = evals + lam[:, None]
    _, null = _power_at_zero(evals, coef2)
    # pseudo-inverse on exact null directions when lam == 0
    pinv = (lam[:, None] == 0) & null
    inv = np.where(pinv, 0.0, 1.0 / np.where(pinv, 1.0, denom))
    w = np.einsum("smn,skn->skm", vecs, proj * inv[:, None, :])
    return w, lam


def build_precoder_systems(eff: EffectiveChannels, aux: Auxiliaries, coordinated: bool = True):
    """(A_b, B_b, A_s, B_s); rows of B are the right-hand sides b_k."""
    ck = aux.omega_k * np.abs(aux.u_k) ** 2
    cl = aux.omega_l * np.abs(aux.u_l) ** 2
    a_b = np.einsum("sk,skm,skn->smn", ck, np.conj(eff.h_tr), eff.h_tr)
    a_s = np.einsum("sl,slm,sln->smn", cl, np.conj(eff.h_s), eff.h_s)
    if coordinated:
        a_b = a_b + np.einsum("sl,slm,sln->smn", cl, np.conj(eff.g_tl), eff.g_tl)
        a_s = a_s + np.einsum("sk,skm,skn->smn", ck, np.conj(eff.g_sk), eff.g_sk)
    b_b = (aux.omega_k * aux.u_k)[:, :, None] * np.conj(eff.h_tr)
    b_s = (aux.omega_l * aux.u_l)[:, :, None] * np.conj(eff.h_s)
    return a_b, b_b, a_s, b_s


def solve_precoders(eff: EffectiveChannels, aux: Auxiliaries, p_b: float, p_s: float,
                    coordinated: bool = True, tbs_active: bool = True, sat_active: bool = True):
    """Closed-form precoders for fixed auxiliaries. Returns (PrecoderSet, lam_b, lam_s)."""
    a_b, b_b, a_s, b_s = build_precoder_systems(eff, aux, coordinated)
    s = a_b.shape[0]
    if tbs_active:
        w_b, lam_b = _solve_station(a_b, b_b, p_b)
    else:
        w_b, lam_b = np.zeros_like(b_b), np.zeros(s)
    if sat_active:
        w_s, lam_s = _solve_station(a_s, b_s, p_s)
    else:
        w_s, lam_s = np.zeros_like(b_s), np.zeros(s)
    return PrecoderSet(w_b, w_s), lam_b, lam_s


def _matched_filter(h, power):
    # equal power split over users, each along conj(h_k)
    s, k, m = h.shape
    if k == 0:
        return np.zeros_like(h)
    norm = np.linalg.norm(h, axis=2, keepdims=True)
    flat = np.full_like(h, 1.0 / np.sqrt(m))
    dirs = np.where(norm > 0, np.conj(h) / np.where(norm > 0, norm, 1.0), flat)
    return dirs * np.sqrt(power / k)


def initial_precoders(h_b, h_s, p_b: float, p_s: float, tbs_active: bool = True,
                      sat_active: bool = True) -> PrecoderSet:
    """Matched filters to the given channels, each station at full power."""
    w_b = _matched_filter(np.asarray(h_b, complex), p_b)
    w_s = _matched_filter(np.asarray(h_s, complex), p_s)
    return PrecoderSet(w_b if tbs_active else np.zeros_like(w_b),
                       w_s if sat_active else np.zeros_like(w_s))


def _fill_power(w, lam, power):
    """Scale slots whose constraint is slack (lam = 0) up to the full budget."""
    used = np.sum(np.abs(w) ** 2, axis=(1, 2))
    slack = (lam == 0) & (used > 0) & (used < power)
    gain = np.sqrt(np.where(slack, power / np.where(used > 0, used, 1.0), 1.0))
    return w * gain[:, None, None]


@dataclass
class WmmseResult:
    precoders: PrecoderSet
    aux: Auxiliaries
    iterations: np.ndarray  # per slot
    trace: list = field(default_factory=list)  # (iteration, objective, sum_rate, lam_b, lam_s)


def wmmse_optimize(eff: EffectiveChannels, noise_k: float, noise_l: float, p_b: float, p_s: float,
                   eps_w: float, t_max_w: int, init: PrecoderSet, coordinated: bool = True,
                   tbs_active: bool = True, sat_active: bool = True) -> WmmseResult:
    """Alternate auxiliary and precoder updates until the slot rate settles."""
    prec = init
    rate = evaluate_rates(eff, prec, noise_k, noise_l).slot_sums
    s = rate.shape[0]
    active = np.ones(s, dtype=bool)
    iters = np.zeros(s, dtype=int)
    trace = []
    for t in range(1, t_max_w + 1):
        aux = update_auxiliaries(eff, prec, noise_k, noise_l)
        cand, lam_b, lam_s = solve_precoders(eff, aux, p_b, p_s, coordinated, tbs_active, sat_active)
        new_rate = evaluate_rates(eff, cand, noise_k, noise_l).slot_sums
        # with a slack budget the subproblem optimum is not unique in scale;
        # the full-power version is kept wherever it rates higher
        full = PrecoderSet(_fill_power(cand.w_b, lam_b, p_b), _fill_power(cand.w_s, lam_s, p_s))
        full_rate = evaluate_rates(eff, full, noise_k, noise_l).slot_sums
        better = full_rate > new_rate
        if np.any(better):
            sel = better[:, None, None]
            cand = PrecoderSet(np.where(sel, full.w_b, cand.w_b), np.where(sel, full.w_s, cand.w_s))
            new_rate = np.where(better, full_rate, new_rate)
        # a slot only moves if its rate does not drop (guards bisection round-off)
        take = active & (new_rate >= rate)
        sel = take[:, None, None]
        prec = PrecoderSet(np.where(sel, cand.w_b, prec.w_b), np.where(sel, cand.w_s, prec.w_s))
        gain = np.where(take, new_rate - rate, 0.0)
        rate = np.where(take, new_rate, rate)
        iters += active
        mse = weighted_mse(eff, cand, aux.u_k, aux.u_l, aux.omega_k, aux.omega_l, noise_k, noise_l)
        trace.append((t, float(np.mean(mse.objective)), float(np.mean(rate)),
                      float(np.mean(lam_b)), float(np.mean(lam_s))))
        active &= take & (np.abs(gain) > eps_w)
        if not np.any(active):
            break
    aux = update_auxiliaries(eff, prec, noise_k, noise_l)
    return WmmseResult(prec, aux, iters, trace)


def trace_to_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "objective", "sum_rate", "lambda_b", "lambda_s"])
    for it, obj, rate, lb, ls in trace:
        w.writerow([it] + [format(x, ".17g") for x in (obj, rate, lb, ls)])
    return buf.getvalue()
