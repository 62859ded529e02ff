"""Outer block coordinate descent, benchmark schemes and the Monte Carlo harness."""

from __future__ import annotations

import csv
import enum
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import FadingDraw, compose_effective_channels, draw_fading, realize_channels
from .config import SystemConfig
from .metrics import PrecoderSet, RateReport, evaluate_rates
from .rcg import assemble_quadratic, rcg_minimize
from .scenario import MASK64, Scenario, build_scenario
from .trajectory import PlatformLimits, ScaProblem, sca_optimize
from .wmmse import initial_precoders, update_auxiliaries, wmmse_optimize


class SchemeId(str, enum.Enum):
    PROPOSED = "proposed"
    NO_RIS = "no_ris"
    RANDOM_RIS = "random_ris"
    FIXED_TRAJECTORY = "fixed_trajectory"
    TBS_ONLY = "tbs_only"
    SAT_ONLY = "sat_only"


@dataclass(frozen=True)
class SchemeFlags:
    ris: bool = True
    optimize_phases: bool = True
    random_phases: bool = False
    optimize_trajectory: bool = True
    tbs_active: bool = True
    sat_active: bool = True


SCHEME_FLAGS = {
    SchemeId.PROPOSED: SchemeFlags(),
    SchemeId.NO_RIS: SchemeFlags(ris=False, optimize_phases=False, optimize_trajectory=False),
    SchemeId.RANDOM_RIS: SchemeFlags(optimize_phases=False, random_phases=True, optimize_trajectory=False),
    SchemeId.FIXED_TRAJECTORY: SchemeFlags(optimize_trajectory=False),
    SchemeId.TBS_ONLY: SchemeFlags(sat_active=False),
    SchemeId.SAT_ONLY: SchemeFlags(tbs_active=False),
}


@dataclass
class BcdState:
    iteration: int
    precoders: PrecoderSet
    v_u: np.ndarray  # (S, N_U)
    v_h: np.ndarray  # (S, N_H)
    uav: np.ndarray  # (S, 3)
    hap: np.ndarray  # (S, 3)
    history: list = field(default_factory=list)  # average sum-rate, entry 0 = initial point
    history_tbs: list = field(default_factory=list)
    history_sat: list = field(default_factory=list)
    reduced_precision: bool = False


def platform_limits(c: SystemConfig):
    uav = PlatformLimits(c.v_u_max, c.slot_duration, c.z_u_min, c.z_u_max, c.eps_q_uav,
                         c.dykstra_max_sweeps, c.pgd_max_iter)
    hap = PlatformLimits(c.v_h_max, c.slot_duration, c.z_h_min, c.z_h_max, c.eps_q_hap,
                         c.dykstra_max_sweeps, c.pgd_max_iter)
    return uav, hap


def random_phases(rng: np.random.Generator, slots: int, n: int) -> np.ndarray:
    return np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=(slots, n)))


def sca_problem(scenario: Scenario, fading: FadingDraw, prec, v_u, v_h, ris: bool = True) -> ScaProblem:
    """Trajectory subproblem with fading, precoders and phases frozen."""
    c = scenario.config
    return ScaProblem(
        channels=lambda u, h: realize_channels(scenario, fading, u, h, ris=ris),
        effective=lambda chan: compose_effective_channels(chan, v_u, v_h),
        precoders=prec, v_u=v_u, v_h=v_h, noise_k=c.noise_tbs, noise_l=c.noise_sat,
        tbs_pos=scenario.tbs_pos, sat_pos=scenario.sat_pos,
        tbs_users=scenario.tbs_users, sat_users=scenario.sat_users,
        uav_gammas=(c.alpha_tbs_u, c.alpha_u_k), include_direct=c.surrogate_includes_direct)


def bcd_optimize(scenario: Scenario, rng: np.random.Generator, eps: float | None = None,
                 i_max: int | None = None, flags: SchemeFlags = SchemeFlags(),
                 fading: FadingDraw | None = None) -> tuple[BcdState, RateReport]:
    """Alternate precoders -> RIS phases -> trajectories until the rate settles."""
    c = scenario.config
    eps = c.eps_bcd if eps is None else eps
    i_max = c.i_max if i_max is None else i_max
    fading_rng, phase_rng = rng.spawn(2)
    if fading is None:
        fading = draw_fading(scenario, fading_rng)
    s = c.n_slots
    uav = scenario.uav_init_traj.points.copy()
    hap = scenario.hap_init_traj.points.copy()
    if flags.random_phases:
        v_u = random_phases(phase_rng, s, c.n_u)
        v_h = random_phases(phase_rng, s, c.n_h)
    else:
        v_u = np.ones((s, c.n_u), complex)
        v_h = np.ones((s, c.n_h), complex)
    nk, nl = c.noise_tbs, c.noise_sat
    uav_lim, hap_lim = platform_limits(c)

    def channels(u, h):
        return realize_channels(scenario, fading, u, h, ris=flags.ris)

    cs = channels(uav, hap)
    prec = initial_precoders(cs.tbs_k, cs.sat_l, c.p_b, c.p_s, flags.tbs_active, flags.sat_active)
    eff = compose_effective_channels(cs, v_u, v_h)
    report = evaluate_rates(eff, prec, nk, nl)
    state = BcdState(0, prec, v_u, v_h, uav, hap, [report.average], [report.average_tbs],
                     [report.average_sat])
    for it in range(1, i_max + 1):
        # precoders
        wm = wmmse_optimize(eff, nk, nl, c.p_b, c.p_s, c.eps_w, c.t_max_w, prec, c.coordinated,
                            flags.tbs_active, flags.sat_active)
        prec, aux = wm.precoders, wm.aux
        # RIS phases, UAV tier then HAP tier
        if flags.optimize_phases:
            quad = assemble_quadratic("uav", cs, prec, aux, v_h, nk, nl)
            v_u = rcg_minimize(quad.Q, quad.q, v_u, c.eps_m, c.t_max_m).v
            if c.refresh_aux_between_tiers:
                aux = update_auxiliaries(compose_effective_channels(cs, v_u, v_h), prec, nk, nl)
            quad = assemble_quadratic("hap", cs, prec, aux, v_u, nk, nl)
            v_h = rcg_minimize(quad.Q, quad.q, v_h, c.eps_m, c.t_max_m).v
        # trajectories
        if flags.optimize_trajectory:
            prob = sca_problem(scenario, fading, prec, v_u, v_h, flags.ris)
            sca = sca_optimize(prob, uav, hap, uav_lim, hap_lim, c.t_max_q)
            uav, hap = sca.uav, sca.hap
            state.reduced_precision |= sca.reduced_precision
            cs = channels(uav, hap)
        eff = compose_effective_channels(cs, v_u, v_h)
        report = evaluate_rates(eff, prec, nk, nl)
        state.iteration = it
        state.precoders, state.v_u, state.v_h, state.uav, state.hap = prec, v_u, v_h, uav, hap
        state.history.append(report.average)
        state.history_tbs.append(report.average_tbs)
        state.history_sat.append(report.average_sat)
        if abs(state.history[-1] - state.history[-2]) <= eps:
            break
    return state, report


def run_scheme(scheme: SchemeId | str, scenario: Scenario, rng: np.random.Generator,
               eps: float | None = None, i_max: int | None = None) -> tuple[BcdState, RateReport]:
    """Run a benchmark scheme; all schemes share the same loop and fading draw."""
    return bcd_optimize(scenario, rng, eps, i_max, SCHEME_FLAGS[SchemeId(scheme)])


# --- Monte Carlo -------------------------------------------------------------------

GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    """One splitmix64 output for the given 64-bit state."""
    z = (state + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(base_seed: int, trial: int) -> int:
    """Seed of trial ``t``: the t-th splitmix64 output of a stream started at base_seed."""
    return splitmix64((int(base_seed) + trial * GOLDEN) & MASK64)


def trial_inputs(config: SystemConfig, base_seed: int, trial: int):
    """(scenario, rng) of one trial; every scheme of the trial sees the same draws."""
    seed = trial_seed(base_seed, trial)
    return build_scenario(config, seed), np.random.default_rng([seed, 1])


RESULT_COLUMNS = ["experiment", "scheme", "sweep_param", "sweep_value", "trial", "R_total",
                  "R_tbs", "R_sat", "iterations", "wall_time_ms"]


@dataclass
class ResultRow:
    experiment: str
    scheme: str
    sweep_param: str
    sweep_value: str
    trial: int
    r_total: float
    r_tbs: float
    r_sat: float
    iterations: int
    wall_time_ms: float | None = None
    history: list = field(default_factory=list)
    history_tbs: list = field(default_factory=list)
    history_sat: list = field(default_factory=list)
    reduced_precision: bool = False
    state: BcdState | None = None

    def cells(self, timing: bool = False):
        wall = format(self.wall_time_ms, ".17g") if (timing and self.wall_time_ms is not None) else ""
        return [self.experiment, self.scheme, self.sweep_param, self.sweep_value, self.trial,
                format(self.r_total, ".17g"), format(self.r_tbs, ".17g"), format(self.r_sat, ".17g"),
                self.iterations, wall]


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def select(self, scheme=None, sweep_value=None, experiment=None):
        return [r for r in self.rows
                if (scheme is None or r.scheme == scheme)
                and (sweep_value is None or r.sweep_value == sweep_value)
                and (experiment is None or r.experiment == experiment)]

    def aggregate(self):
        """{(experiment, scheme, sweep_value): (mean, std, count)} of R_total."""
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r.experiment, r.scheme, r.sweep_value), []).append(r.r_total)
        return {k: (float(np.mean(v)), float(np.std(v)), len(v)) for k, v in groups.items()}

    def mean(self, **kw) -> float:
        return float(np.mean([r.r_total for r in self.select(**kw)]))

    def to_csv(self, timing: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in self.rows:
            w.writerow(r.cells(timing))
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["experiment", "scheme", "sweep_value", "trials", "R_mean", "R_std"])
        for (exp, scheme, sv), (m, sd, n) in self.aggregate().items():
            w.writerow([exp, scheme, sv, n, format(m, ".17g"), format(sd, ".17g")])
        return buf.getvalue()


def _trial_row(config: SystemConfig, base_seed: int, trial: int, scheme: str, experiment: str,
               sweep_param: str, sweep_value: str, keep_state: bool) -> ResultRow:
    scenario, rng = trial_inputs(config, base_seed, trial)
    t0 = time.perf_counter()
    state, rep = run_scheme(scheme, scenario, rng)
    wall = (time.perf_counter() - t0) * 1e3
    return ResultRow(experiment, SchemeId(scheme).value, sweep_param, sweep_value, trial, rep.average,
                     rep.average_tbs, rep.average_sat, state.iteration, wall, list(state.history),
                     list(state.history_tbs), list(state.history_sat), state.reduced_precision,
                     state if keep_state else None)


def _star_row(args):
    return _trial_row(*args)


def worker_count(default: int = 1) -> int:
    """Worker processes allowed by ARIS_THREADS (unset or invalid: ``default``)."""
    try:
        return max(1, int(os.environ.get("ARIS_THREADS", default)))
    except ValueError:
        return max(1, default)


def monte_carlo(config: SystemConfig, schemes, trials: int, base_seed: int, experiment: str = "run",
                sweep_param: str = "", sweep_value: str = "", keep_state: bool = False,
                workers: int | None = None) -> ResultTable:
    """Run every scheme on ``trials`` independent drops with matched per-trial seeds.

    Rows come back in (trial, scheme) order whatever the worker count, so the
    table is identical for sequential and parallel execution.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    workers = worker_count() if workers is None else max(1, workers)
    jobs = [(config, base_seed, t, SchemeId(scheme).value, experiment, sweep_param, sweep_value, keep_state)
            for t in range(trials) for scheme in schemes]
    if workers == 1 or len(jobs) == 1:
        rows = [_trial_row(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_star_row, jobs))
    return ResultTable(rows)
