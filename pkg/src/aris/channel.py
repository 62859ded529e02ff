"""Channel synthesis: steering vectors, link budgets, Rician draws, effective channels.

Per trial, the small-scale part of every link (LoS steering at the initial
positions plus the NLoS Gaussian term, and the rain draws) is sampled once and
frozen in a :class:`FadingDraw`.  :func:`realize_channels` then applies the
distance-dependent amplitudes for any platform positions, so moving the UAV or
HAP only rescales the links they touch.

All per-slot arrays carry a leading slot axis ``S``.  Row channels (``1 x M``)
are stored as ``(S, users, M)``; RIS-side vectors (``N x 1``) as
``(S, users, N)``; matrices keep their natural ``(S, rows, cols)`` layout.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .config import SystemConfig
from .errors import DegenerateGeometryError, InvalidParameterError, InvalidPhasesError
from .scenario import Scenario

PHASE_TOL = 1e-8


def _phase_ramp(m: int, spacing: float, cosine) -> np.ndarray:
    # unit-norm ramp exp(-i 2 pi m d cos(.)) / sqrt(m), element axis last
    phase = np.multiply.outer(np.asarray(cosine, float), np.arange(m)) * (2 * np.pi * spacing)
    return np.exp(-1j * phase) / np.sqrt(m) if m else phase.astype(complex)


def steering_ula(m: int, spacing: float, azimuth, elevation) -> np.ndarray:
    """Unit-norm ULA response; broadcasts over angle arrays (antenna axis last)."""
    return _phase_ramp(m, spacing, np.cos(elevation) * np.cos(azimuth))


def steering_upa(nx: int, ny: int, spacing_x: float, spacing_y: float, azimuth, elevation):
    """UPA response ``kron(a_x, a_y) / sqrt(nx*ny)``; its norm is ``1/sqrt(nx*ny)``."""
    ax = _phase_ramp(nx, spacing_x, np.cos(elevation) * np.cos(azimuth))
    ay = _phase_ramp(ny, spacing_y, np.cos(elevation) * np.sin(azimuth))
    out = (ax[..., :, None] * ay[..., None, :]).reshape(ax.shape[:-1] + (nx * ny,))
    return out / np.sqrt(max(nx * ny, 1))


def link_gain_terrestrial(d, alpha: float, beta_o: float):
    """Power gain ``beta_o * d**-alpha``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DegenerateGeometryError("non-positive link distance")
    return beta_o * d ** (-alpha)


def link_gain_satellite(d, wavelength: float, g_tx: float, g_rx: float, rain_linear=1.0):
    """Free-space amplitude ``sqrt((lambda/(4 pi d))^2 g_tx g_rx r)``, summed in dB."""
    d = np.asarray(d, dtype=float)
    rain = np.asarray(rain_linear, dtype=float)
    if np.any(d <= 0) or wavelength <= 0 or g_tx <= 0 or g_rx <= 0 or np.any(rain <= 0):
        raise InvalidParameterError("satellite link budget needs positive inputs")
    power_db = (20 * np.log10(wavelength / (4 * np.pi * d)) + 10 * np.log10(g_tx)
                + 10 * np.log10(g_rx) + 10 * np.log10(rain))
    return 10.0 ** (power_db / 20.0)


def sample_rician(los, kappa: float, scale, rng: np.random.Generator) -> np.ndarray:
    """``scale * (sqrt(k/(k+1)) los + sqrt(1/(k+1)) W)`` with W ~ CN(0, I)."""
    los = np.asarray(los, dtype=complex)
    nlos = (rng.standard_normal(los.shape) + 1j * rng.standard_normal(los.shape)) / np.sqrt(2)
    mix = np.sqrt(kappa / (kappa + 1.0)) * los + np.sqrt(1.0 / (kappa + 1.0)) * nlos
    return scale * mix


def sample_rain(rng: np.random.Generator, shape, mu: float, sigma2: float) -> np.ndarray:
    """Linear rain attenuation factor ``10**(-A/10)`` with ``ln A ~ N(mu, sigma2)``."""
    atten_db = np.exp(rng.normal(mu, np.sqrt(sigma2), size=shape))
    return 10.0 ** (-atten_db / 10.0)


# --- geometry helpers -------------------------------------------------------------

def _angles(src, dst):
    """Azimuth/elevation arrays of dst seen from src (broadcast over leading axes)."""
    delta = np.asarray(dst, float) - np.asarray(src, float)
    horiz = np.hypot(delta[..., 0], delta[..., 1])
    if np.any(np.hypot(horiz, delta[..., 2]) == 0):
        raise DegenerateGeometryError("coincident nodes")
    return np.arctan2(delta[..., 1], delta[..., 0]), np.arctan2(delta[..., 2], horiz)


def _unit_modulus(v):
    # LoS components are the steering phases with unit per-entry power, so
    # kappa is the actual LoS/NLoS power ratio.
    return np.exp(1j * np.angle(v)) if v.size else v.astype(complex)


def _ula(c: SystemConfig, src, dst):
    az, el = _angles(src, dst)
    return steering_ula(c.m_b, c.spacing_tbs, az, el)


def _sat(c: SystemConfig, src, dst):
    az, el = _angles(src, dst)
    return steering_upa(c.m_s_x, c.m_s_y, c.spacing_sat, c.spacing_sat, az, el)


def _uav_ris(c: SystemConfig, src, dst):
    az, el = _angles(src, dst)
    return steering_upa(c.n_u_x, c.n_u_y, c.spacing_uav_ris, c.spacing_uav_ris, az, el)


def _hap_ris(c: SystemConfig, src, dst):
    az, el = _angles(src, dst)
    return steering_upa(c.n_h_x, c.n_h_y, c.spacing_hap_ris, c.spacing_hap_ris, az, el)


LINKS = ("tbs_k", "tbs_u", "u_k", "sat_l", "sat_h", "h_l", "sat_k", "h_k", "tbs_l", "u_l")


@dataclass(frozen=True)
class FadingDraw:
    """Unit-scale small-scale fading of every link plus rain, per slot."""

    tbs_k: np.ndarray  # (S, K, M_b)
    tbs_u: np.ndarray  # (S, N_U, M_b)
    u_k: np.ndarray  # (S, K, N_U)
    sat_l: np.ndarray  # (S, L, M_s)
    sat_h: np.ndarray  # (S, N_H, M_s)
    h_l: np.ndarray  # (S, L, N_H)
    sat_k: np.ndarray  # (S, K, M_s)
    h_k: np.ndarray  # (S, K, N_H)
    tbs_l: np.ndarray  # (S, L, M_b)
    u_l: np.ndarray  # (S, L, N_U)
    rain_k: np.ndarray  # (S, K) linear
    rain_l: np.ndarray  # (S, L) linear


def los_components(scenario: Scenario, uav_pts, hap_pts) -> dict:
    """Unit-modulus LoS arrays for every link at the given per-slot positions."""
    c = scenario.config
    tbs, sat = scenario.tbs_pos, scenario.sat_pos
    uk, ul = scenario.tbs_users, scenario.sat_users
    s = uav_pts.shape[0]
    U = uav_pts[:, None, :]
    H = hap_pts[:, None, :]
    out = {
        "tbs_k": np.conj(_ula(c, tbs, uk)),
        "u_k": _uav_ris(c, U, uk[None]),
        "sat_l": np.conj(_sat(c, sat, ul)),
        "h_l": _hap_ris(c, H, ul[None]),
        "sat_k": np.conj(_sat(c, sat, uk)),
        "h_k": _hap_ris(c, H, uk[None]),
        "tbs_l": np.conj(_ula(c, tbs, ul)),
        "u_l": _uav_ris(c, U, ul[None]),
    }
    # matrices: receive response times conjugate transmit response
    a_ris = _uav_ris(c, uav_pts, tbs)  # (S, N_U)
    a_tx = _ula(c, tbs, uav_pts)  # (S, M_b)
    out["tbs_u"] = a_ris[:, :, None] * np.conj(a_tx)[:, None, :]
    a_ris = _hap_ris(c, hap_pts, sat)
    a_tx = _sat(c, sat, hap_pts)
    out["sat_h"] = a_ris[:, :, None] * np.conj(a_tx)[:, None, :]
    for key, arr in out.items():
        arr = _unit_modulus(arr)
        if key in ("tbs_k", "sat_l", "sat_k", "tbs_l"):  # static ground links
            arr = np.broadcast_to(arr, (s,) + arr.shape)
        out[key] = arr
    return out


def draw_fading(scenario: Scenario, rng: np.random.Generator, uav_pts=None, hap_pts=None) -> FadingDraw:
    """Sample the frozen small-scale state; LoS evaluated at the given (default: initial) paths."""
    c = scenario.config
    uav_pts = scenario.uav_init_traj.points if uav_pts is None else np.asarray(uav_pts, float)
    hap_pts = scenario.hap_init_traj.points if hap_pts is None else np.asarray(hap_pts, float)
    los = los_components(scenario, uav_pts, hap_pts)
    kappa = {"tbs_k": c.kappa_tbs_k, "tbs_u": c.kappa_tbs_u, "u_k": c.kappa_u_k,
             "sat_l": c.kappa_sat_l, "sat_h": c.kappa_sat_h, "h_l": c.kappa_h_l,
             "sat_k": c.kappa_sat_l, "h_k": c.kappa_h_l, "tbs_l": c.kappa_tbs_k,
             "u_l": c.kappa_u_k}
    # one child stream per link keeps each link's draw independent of the
    # others' sizes (e.g. removing a RIS leaves the direct links untouched)
    streams = rng.spawn(len(LINKS) + 1)
    draws = {name: sample_rician(los[name], kappa[name], 1.0, g) for name, g in zip(LINKS, streams)}
    rain = sample_rain(streams[-1], (uav_pts.shape[0], c.k_users + c.l_users), c.rain_mu, c.rain_sigma2)
    return FadingDraw(rain_k=rain[:, :c.k_users], rain_l=rain[:, c.k_users:], **draws)


@dataclass(frozen=True)
class ChannelSet:
    """Realized channels for all slots (same field layout as FadingDraw)."""

    tbs_k: np.ndarray
    tbs_u: np.ndarray
    u_k: np.ndarray
    sat_l: np.ndarray
    sat_h: np.ndarray
    h_l: np.ndarray
    sat_k: np.ndarray
    h_k: np.ndarray
    tbs_l: np.ndarray
    u_l: np.ndarray
    rain_k: np.ndarray
    rain_l: np.ndarray

    @property
    def n_slots(self) -> int:
        return self.tbs_k.shape[0]

    def slot(self, n: int) -> "ChannelSet":
        return ChannelSet(**{f.name: getattr(self, f.name)[n:n + 1] for f in fields(self)})


@dataclass(frozen=True)
class LinkAmplitudes:
    """Distance-dependent amplitude of every link; broadcastable to (S, users)."""

    tbs_k: np.ndarray  # (K,)
    tbs_u: np.ndarray  # (S,)
    u_k: np.ndarray  # (S, K)
    sat_l: np.ndarray  # (S, L)
    sat_h: np.ndarray  # (S,)
    h_l: np.ndarray  # (S, L)
    sat_k: np.ndarray  # (S, K)
    h_k: np.ndarray  # (S, K)
    tbs_l: np.ndarray  # (L,)
    u_l: np.ndarray  # (S, L)


def _dist(a, b):
    d = np.linalg.norm(np.asarray(a, float) - np.asarray(b, float), axis=-1)
    if np.any(d <= 0):
        raise DegenerateGeometryError("coincident nodes")
    return d


def link_amplitudes(scenario: Scenario, uav_pts, hap_pts, rain_k, rain_l) -> LinkAmplitudes:
    c = scenario.config
    uk, ul = scenario.tbs_users, scenario.sat_users
    U = np.asarray(uav_pts, float)
    H = np.asarray(hap_pts, float)
    lam = c.wavelength_sat

    def terr(d, alpha):
        return np.sqrt(link_gain_terrestrial(d, alpha, c.beta_o))

    return LinkAmplitudes(
        tbs_k=terr(_dist(scenario.tbs_pos, uk), c.alpha_tbs_k),
        tbs_u=terr(_dist(U, scenario.tbs_pos), c.alpha_tbs_u),
        u_k=terr(_dist(U[:, None], uk[None]), c.alpha_u_k),
        sat_l=link_gain_satellite(_dist(scenario.sat_pos, ul)[None], lam, c.g_sat, c.g_user, rain_l),
        sat_h=link_gain_satellite(_dist(H, scenario.sat_pos), lam, c.g_sat, c.g_hap),
        h_l=link_gain_satellite(_dist(H[:, None], ul[None]), lam, c.g_hap, c.g_user, rain_l),
        sat_k=link_gain_satellite(_dist(scenario.sat_pos, uk)[None], lam, c.g_sat, c.g_user, rain_k),
        h_k=link_gain_satellite(_dist(H[:, None], uk[None]), lam, c.g_hap, c.g_user, rain_k),
        tbs_l=terr(_dist(scenario.tbs_pos, ul), c.alpha_tbs_l),
        u_l=terr(_dist(U[:, None], ul[None]), c.alpha_u_k),
    )


def realize_channels(scenario: Scenario, fading: FadingDraw, uav_pts, hap_pts,
                     ris: bool = True) -> ChannelSet:
    """Scale the frozen fading by the amplitudes at the given platform positions.

    ``ris=False`` zeroes every RIS-side link (the no-RIS benchmark).  With
    ``cross_tier_interference`` off the cross-tier links are zeroed.
    """
    c = scenario.config
    amp = link_amplitudes(scenario, uav_pts, hap_pts, fading.rain_k, fading.rain_l)
    ris_on = 1.0 if ris else 0.0
    cross = 1.0 if c.cross_tier_interference else 0.0
    return ChannelSet(
        tbs_k=fading.tbs_k * amp.tbs_k[None, :, None],
        tbs_u=fading.tbs_u * (ris_on * amp.tbs_u)[:, None, None],
        u_k=fading.u_k * (ris_on * amp.u_k)[:, :, None],
        sat_l=fading.sat_l * amp.sat_l[:, :, None],
        sat_h=fading.sat_h * (ris_on * amp.sat_h)[:, None, None],
        h_l=fading.h_l * (ris_on * amp.h_l)[:, :, None],
        sat_k=fading.sat_k * (cross * amp.sat_k)[:, :, None],
        h_k=fading.h_k * (cross * ris_on * amp.h_k)[:, :, None],
        tbs_l=fading.tbs_l * (cross * amp.tbs_l)[None, :, None],
        u_l=fading.u_l * (cross * ris_on * amp.u_l)[:, :, None],
        rain_k=fading.rain_k,
        rain_l=fading.rain_l,
    )


def assemble_channel_set(scenario: Scenario, uav_pos, hap_pos, rng: np.random.Generator,
                         ris: bool = True) -> ChannelSet:
    """Draw fresh fading and realize it at the given positions ((3,) or (S, 3))."""
    uav = np.atleast_2d(np.asarray(uav_pos, float))
    hap = np.atleast_2d(np.asarray(hap_pos, float))
    fading = draw_fading(scenario, rng, uav, hap)
    return realize_channels(scenario, fading, uav, hap, ris=ris)


@dataclass(frozen=True)
class EffectiveChannels:
    h_tr: np.ndarray  # (S, K, M_b) TBS -> TBS user
    h_s: np.ndarray  # (S, L, M_s) SAT -> SAT user
    g_sk: np.ndarray  # (S, K, M_s) SAT -> TBS user (interference)
    g_tl: np.ndarray  # (S, L, M_b) TBS -> SAT user (interference)


def check_phases(v, name: str = "v") -> None:
    v = np.asarray(v)
    if v.size and np.max(np.abs(np.abs(v) - 1.0)) > PHASE_TOL:
        raise InvalidPhasesError(f"{name}: phases must be unit-modulus")


def cascade(h_ris, v, g_mat):
    """``h_ris^H diag(v) G`` per slot and user: (S,U,N),(S,N),(S,N,M) -> (S,U,M)."""
    return np.einsum("sun,sn,snm->sum", np.conj(h_ris), v, g_mat)


def compose_effective_channels(cs: ChannelSet, v_u, v_h) -> EffectiveChannels:
    v_u = np.asarray(v_u, complex).reshape(cs.n_slots, -1)
    v_h = np.asarray(v_h, complex).reshape(cs.n_slots, -1)
    check_phases(v_u, "v_u")
    check_phases(v_h, "v_h")
    return EffectiveChannels(
        h_tr=cs.tbs_k + cascade(cs.u_k, v_u, cs.tbs_u),
        h_s=cs.sat_l + cascade(cs.h_l, v_h, cs.sat_h),
        g_sk=cs.sat_k + cascade(cs.h_k, v_h, cs.sat_h),
        g_tl=cs.tbs_l + cascade(cs.u_l, v_u, cs.tbs_u),
    )
