"""SINRs, achievable rates, frame-average sum-rate and weighted MSE."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .channel import EffectiveChannels


@dataclass(frozen=True)
class PrecoderSet:
    w_b: np.ndarray  # (S, K, M_b) one row per TBS user
    w_s: np.ndarray  # (S, L, M_s)

    def power_b(self) -> np.ndarray:
        return np.sum(np.abs(self.w_b) ** 2, axis=(1, 2))

    def power_s(self) -> np.ndarray:
        return np.sum(np.abs(self.w_s) ** 2, axis=(1, 2))


def _gains(eff: EffectiveChannels, prec: PrecoderSet):
    # gb[s, k, i] = h_tr,k w_b,i ; xk[s, k, l] = g_SAT->k w_s,l
    gb = np.einsum("skm,sim->ski", eff.h_tr, prec.w_b)
    xk = np.einsum("skm,slm->skl", eff.g_sk, prec.w_s)
    gs = np.einsum("slm,sjm->slj", eff.h_s, prec.w_s)
    xl = np.einsum("slm,skm->slk", eff.g_tl, prec.w_b)
    return gb, xk, gs, xl


@dataclass(frozen=True)
class LinkPowers:
    """Desired power, total received power T and interference-plus-noise."""

    desired_k: np.ndarray
    ipn_k: np.ndarray
    desired_l: np.ndarray
    ipn_l: np.ndarray
    signal_k: np.ndarray  # complex h_tr,k w_b,k
    signal_l: np.ndarray

    @property
    def total_k(self) -> np.ndarray:
        return self.desired_k + self.ipn_k

    @property
    def total_l(self) -> np.ndarray:
        return self.desired_l + self.ipn_l


def link_powers(eff: EffectiveChannels, prec: PrecoderSet, noise_k: float, noise_l: float) -> LinkPowers:
    gb, xk, gs, xl = _gains(eff, prec)
    sig_k = np.diagonal(gb, axis1=1, axis2=2)
    sig_l = np.diagonal(gs, axis1=1, axis2=2)
    pb = np.abs(gb) ** 2
    ps = np.abs(gs) ** 2
    des_k = np.abs(sig_k) ** 2
    des_l = np.abs(sig_l) ** 2
    # interference summed with the desired term masked out (not subtracted),
    # so interference-plus-noise stays accurate at high SNR
    off_k = 1.0 - np.eye(pb.shape[1])
    off_l = 1.0 - np.eye(ps.shape[1])
    ipn_k = np.sum(pb * off_k, axis=2) + np.sum(np.abs(xk) ** 2, axis=2) + noise_k
    ipn_l = np.sum(ps * off_l, axis=2) + np.sum(np.abs(xl) ** 2, axis=2) + noise_l
    return LinkPowers(des_k, ipn_k, des_l, ipn_l, sig_k, sig_l)


def compute_sinrs(eff: EffectiveChannels, prec: PrecoderSet, noise_k: float, noise_l: float):
    """Per-slot SINR arrays ``(S, K)`` and ``(S, L)``."""
    lp = link_powers(eff, prec, noise_k, noise_l)
    return lp.desired_k / lp.ipn_k, lp.desired_l / lp.ipn_l


@dataclass(frozen=True)
class RateReport:
    rates_k: np.ndarray  # (S, K) bits/s/Hz
    rates_l: np.ndarray  # (S, L)

    @property
    def slot_sums(self) -> np.ndarray:
        return self.rates_k.sum(axis=1) + self.rates_l.sum(axis=1)

    @property
    def average(self) -> float:
        return float(np.mean(self.slot_sums))

    @property
    def average_tbs(self) -> float:
        return float(np.mean(self.rates_k.sum(axis=1)))

    @property
    def average_sat(self) -> float:
        return float(np.mean(self.rates_l.sum(axis=1)))

    def to_csv(self, trial: int = 0, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["trial", "slot", "user_id", "tier", "rate"])
        for n in range(self.rates_k.shape[0]):
            for k, r in enumerate(self.rates_k[n]):
                w.writerow([trial, n, k, "tbs", format(float(r), ".17g")])
            for l, r in enumerate(self.rates_l[n]):
                w.writerow([trial, n, l, "sat", format(float(r), ".17g")])
        return buf.getvalue()


def average_sum_rate(sinr_k, sinr_l) -> RateReport:
    return RateReport(np.log2(1.0 + np.asarray(sinr_k, float)),
                      np.log2(1.0 + np.asarray(sinr_l, float)))


def evaluate_rates(eff: EffectiveChannels, prec: PrecoderSet, noise_k: float, noise_l: float) -> RateReport:
    return average_sum_rate(*compute_sinrs(eff, prec, noise_k, noise_l))


@dataclass(frozen=True)
class MseReport:
    total_k: np.ndarray  # T_k
    total_l: np.ndarray
    e_k: np.ndarray
    e_l: np.ndarray
    weighted_k: np.ndarray  # omega_k e_k
    weighted_l: np.ndarray
    objective: np.ndarray  # per slot sum(omega e - ln omega)


def weighted_mse(eff: EffectiveChannels, prec: PrecoderSet, u_k, u_l, omega_k, omega_l,
                 noise_k: float, noise_l: float) -> MseReport:
    """MSE ``e = |u|^2 T - 2 Re{conj(u) h w} + 1`` per user and the WMMSE objective."""
    lp = link_powers(eff, prec, noise_k, noise_l)
    e_k = np.abs(u_k) ** 2 * lp.total_k - 2 * np.real(np.conj(u_k) * lp.signal_k) + 1.0
    e_l = np.abs(u_l) ** 2 * lp.total_l - 2 * np.real(np.conj(u_l) * lp.signal_l) + 1.0
    wk, wl = omega_k * e_k, omega_l * e_l
    obj = (wk - np.log(omega_k)).sum(axis=1) + (wl - np.log(omega_l)).sum(axis=1)
    return MseReport(lp.total_k, lp.total_l, e_k, e_l, wk, wl, obj)
