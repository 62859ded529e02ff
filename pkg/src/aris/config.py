"""System configuration: every scenario, channel, power, mobility and solver knob.

Defaults reproduce the simulation table of the dual aerial-RIS network.
Power-like quantities are configured in dBm/dBi/dB and exposed in linear
units through properties; everything else is SI.

The on-disk format is INI (``configparser``) with one section per group::

    [power]
    p_b_dbm = 44.77

Missing keys take their defaults, unknown keys are rejected.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Tuple

from .errors import ConfigError

SPEED_OF_LIGHT = 299_792_458.0

SECTIONS = ("scenario", "channel", "power", "mobility", "solver")


def _f(default: Any, section: str, **kw: Any) -> Any:
    return field(default=default, metadata={"section": section, **kw})


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    # scenario
    m_b: int = _f(8, "scenario")
    m_s_x: int = _f(8, "scenario")
    m_s_y: int = _f(4, "scenario")
    k_users: int = _f(3, "scenario")
    l_users: int = _f(4, "scenario")
    n_u_x: int = _f(4, "scenario")
    n_u_y: int = _f(4, "scenario")
    n_h_x: int = _f(6, "scenario")
    n_h_y: int = _f(6, "scenario")
    n_slots: int = _f(60, "scenario")
    slot_duration: float = _f(1.0, "scenario")
    tbs_position: Tuple[float, ...] = _f((0.0, 0.0, 0.0), "scenario", length=3)
    sat_position: Tuple[float, ...] = _f((600.0, 800.0, 600e3), "scenario", length=3)
    tbs_region: Tuple[float, ...] = _f((150.0, 400.0, 130.0, 400.0), "scenario", length=4)
    sat_region: Tuple[float, ...] = _f((1100.0, 1400.0, 600.0, 900.0), "scenario", length=4)
    # UAV starts near the TBS and heads for the TBS-user centroid; an explicit
    # end point (x, y) overrides the automatic one.
    uav_start: Tuple[float, ...] = _f((10.0, 10.0), "scenario", length=2)
    uav_end: Optional[Tuple[float, ...]] = _f(None, "scenario", length=2)
    uav_altitude: float = _f(165.0, "scenario")
    hap_altitude: float = _f(21e3, "scenario")
    hap_path_length: float = _f(100.0, "scenario")
    hap_heading_deg: float = _f(0.0, "scenario")

    # channel
    f_c: float = _f(3.5e9, "channel")
    f_c_sat: float = _f(20e9, "channel")
    spacing_tbs: float = _f(0.5, "channel")
    spacing_sat: float = _f(0.5, "channel")
    spacing_uav_ris: float = _f(0.5, "channel")
    spacing_hap_ris: float = _f(0.5, "channel")
    kappa_tbs_k: float = _f(5.0, "channel")
    kappa_tbs_u: float = _f(8.0, "channel")
    kappa_u_k: float = _f(5.0, "channel")
    kappa_sat_l: float = _f(3.0, "channel")
    kappa_sat_h: float = _f(6.0, "channel")
    kappa_h_l: float = _f(3.0, "channel")
    alpha_tbs_k: float = _f(3.5, "channel")
    alpha_tbs_u: float = _f(2.2, "channel")
    alpha_u_k: float = _f(2.2, "channel")
    alpha_tbs_l: float = _f(3.5, "channel")
    beta_o_db: float = _f(-30.0, "channel")  # tabulated as 0 dBm, i.e. 1e-3
    g_sat_dbi: float = _f(30.0, "channel")
    g_hap_dbi: float = _f(14.0, "channel")
    g_user_dbi: float = _f(0.0, "channel")
    rain_mu: float = _f(-2.6, "channel")
    rain_sigma2: float = _f(1.63, "channel")
    cross_tier_interference: bool = _f(True, "channel")

    # power
    p_b_dbm: float = _f(44.77, "power")
    p_s_dbm: float = _f(54.8, "power")
    noise_tbs_dbm: float = _f(-90.0, "power")
    noise_sat_dbm: float = _f(-90.0, "power")

    # mobility
    v_u_max: float = _f(30.0, "mobility")
    v_h_max: float = _f(5.0, "mobility")
    z_u_min: float = _f(80.0, "mobility")
    z_u_max: float = _f(250.0, "mobility")
    z_h_min: float = _f(17e3, "mobility")
    z_h_max: float = _f(25e3, "mobility")

    # solver
    eps_w: float = _f(1e-4, "solver")
    t_max_w: int = _f(100, "solver")
    eps_m: float = _f(1e-6, "solver")
    t_max_m: int = _f(200, "solver")
    eps_q_uav: float = _f(1e-2, "solver")
    eps_q_hap: float = _f(1e-1, "solver")
    t_max_q: int = _f(30, "solver")
    eps_bcd: float = _f(1e-3, "solver")
    i_max: int = _f(20, "solver")
    pgd_max_iter: int = _f(300, "solver")
    dykstra_max_sweeps: int = _f(500, "solver")
    coordinated: bool = _f(True, "solver")
    refresh_aux_between_tiers: bool = _f(False, "solver")
    surrogate_includes_direct: bool = _f(True, "solver")

    def __post_init__(self) -> None:
        _validate(self)

    # derived quantities -------------------------------------------------
    @property
    def m_s(self) -> int:
        return self.m_s_x * self.m_s_y

    @property
    def n_u(self) -> int:
        return self.n_u_x * self.n_u_y

    @property
    def n_h(self) -> int:
        return self.n_h_x * self.n_h_y

    @property
    def p_b(self) -> float:
        return dbm_to_watts(self.p_b_dbm)

    @property
    def p_s(self) -> float:
        return dbm_to_watts(self.p_s_dbm)

    @property
    def noise_tbs(self) -> float:
        return dbm_to_watts(self.noise_tbs_dbm)

    @property
    def noise_sat(self) -> float:
        return dbm_to_watts(self.noise_sat_dbm)

    @property
    def beta_o(self) -> float:
        return db_to_linear(self.beta_o_db)

    @property
    def g_sat(self) -> float:
        return db_to_linear(self.g_sat_dbi)

    @property
    def g_hap(self) -> float:
        return db_to_linear(self.g_hap_dbi)

    @property
    def g_user(self) -> float:
        return db_to_linear(self.g_user_dbi)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def wavelength_sat(self) -> float:
        return SPEED_OF_LIGHT / self.f_c_sat

    def replace(self, **changes: Any) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


def key_path(name: str) -> str:
    sec = _FIELDS[name].metadata["section"]
    return f"{sec}.{name}"


_FIELDS = {f.name: f for f in dataclasses.fields(SystemConfig)}

_POSITIVE_INT = ("m_b", "m_s_x", "m_s_y", "k_users", "l_users", "t_max_w", "t_max_m",
                 "t_max_q", "i_max", "pgd_max_iter", "dykstra_max_sweeps")
# RIS sizes may be zero: removes the surface altogether.
_NONNEG_INT = ("n_u_x", "n_u_y", "n_h_x", "n_h_y")
_POSITIVE = ("slot_duration", "f_c", "f_c_sat", "spacing_tbs", "spacing_sat",
             "spacing_uav_ris", "spacing_hap_ris", "kappa_tbs_k", "kappa_tbs_u", "kappa_u_k",
             "kappa_sat_l", "kappa_sat_h", "kappa_h_l", "alpha_tbs_k", "alpha_tbs_u",
             "alpha_u_k", "alpha_tbs_l", "rain_sigma2", "v_u_max", "v_h_max",
             "eps_w", "eps_m", "eps_q_uav", "eps_q_hap", "eps_bcd", "uav_altitude",
             "hap_altitude", "z_u_min", "z_h_min")


def _bad(name: str, why: str, value: Any) -> ConfigError:
    return ConfigError(f"{key_path(name)}: {why} (got {value!r})")


def _validate(cfg: SystemConfig) -> None:
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        n = f.metadata.get("length")
        if n is not None:
            if len(value) != n:
                raise _bad(f.name, f"expected {n} comma-separated numbers", value)
            if not all(math.isfinite(x) for x in value):
                raise _bad(f.name, "coordinates must be finite", value)
        elif isinstance(value, float) and not math.isfinite(value):
            raise _bad(f.name, "must be finite", value)
    for name in _POSITIVE_INT:
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
            raise _bad(name, "must be a positive integer", v)
    for name in _NONNEG_INT:
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise _bad(name, "must be a non-negative integer", v)
    if isinstance(cfg.n_slots, bool) or not isinstance(cfg.n_slots, int) or cfg.n_slots < 2:
        raise _bad("n_slots", "must be an integer >= 2", cfg.n_slots)
    for name in _POSITIVE:
        if not getattr(cfg, name) > 0:
            raise _bad(name, "must be strictly positive", getattr(cfg, name))
    if cfg.z_u_min > cfg.z_u_max:
        raise _bad("z_u_max", "must be >= mobility.z_u_min", cfg.z_u_max)
    if cfg.z_h_min > cfg.z_h_max:
        raise _bad("z_h_max", "must be >= mobility.z_h_min", cfg.z_h_max)
    if not cfg.z_u_min <= cfg.uav_altitude <= cfg.z_u_max:
        raise _bad("uav_altitude", "must lie in [z_u_min, z_u_max]", cfg.uav_altitude)
    if not cfg.z_h_min <= cfg.hap_altitude <= cfg.z_h_max:
        raise _bad("hap_altitude", "must lie in [z_h_min, z_h_max]", cfg.hap_altitude)
    if cfg.hap_path_length < 0:
        raise _bad("hap_path_length", "must be non-negative", cfg.hap_path_length)
    for name in ("tbs_region", "sat_region"):
        x0, x1, y0, y1 = getattr(cfg, name)
        if not (x0 <= x1 and y0 <= y1):
            raise _bad(name, "expected x_min,x_max,y_min,y_max with min <= max",
                       getattr(cfg, name))
    if cfg.tbs_position[2] != 0.0:
        raise _bad("tbs_position", "ground node must have z = 0", cfg.tbs_position)


# --- text (de)serialisation ---------------------------------------------------

def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, tuple):
        return ", ".join(_format_value(float(v)) for v in value)
    return str(value)


def _parse_value(name: str, text: str) -> Any:
    f = _FIELDS[name]
    text = text.strip()
    default = f.default
    try:
        if f.metadata.get("length") is not None:
            if text == "" or text.lower() == "none":
                return None
            return tuple(float(t) for t in text.split(","))
        if isinstance(default, bool):
            low = text.lower()
            if low in ("on", "true", "yes", "1"):
                return True
            if low in ("off", "false", "no", "0"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"{key_path(name)}: cannot parse {text!r}") from None


def config_from_sections(sections: Mapping[str, Mapping[str, str]]) -> SystemConfig:
    """Build a config from ``{section: {key: text}}``; absent keys keep defaults."""
    values: dict[str, Any] = {}
    for sec, items in sections.items():
        if sec not in SECTIONS:
            raise ConfigError(f"{sec}: unknown section")
        for key, text in items.items():
            if key not in _FIELDS or _FIELDS[key].metadata["section"] != sec:
                raise ConfigError(f"{sec}.{key}: unknown key")
            values[key] = _parse_value(key, text)
    return SystemConfig(**values)


def config_to_sections(cfg: SystemConfig) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {s: {} for s in SECTIONS}
    for f in dataclasses.fields(cfg):
        out[f.metadata["section"]][f.name] = _format_value(getattr(cfg, f.name))
    return out


def dump_config(cfg: SystemConfig, extra: Optional[Mapping[str, Mapping[str, str]]] = None) -> str:
    """Render ``cfg`` (plus optional extra sections) as INI text."""
    parser = configparser.ConfigParser(interpolation=None)
    for sec, items in config_to_sections(cfg).items():
        parser[sec] = items
    for sec, items in (extra or {}).items():
        parser[sec] = dict(items)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def parse_ini(text: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"<file>: parse failure: {exc}") from None
    return {sec: dict(parser[sec]) for sec in parser.sections()}
