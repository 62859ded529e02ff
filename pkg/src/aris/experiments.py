"""Experiment presets, config-file ingestion and CSV emission.

A config file is the system INI (see ``aris.config``) plus an optional
``[experiment]`` section::

    [experiment]
    name = pb_sweep
    sweep_param = p_b_dbm
    sweep_values = 40, 42, 44, 46, 47
    schemes = proposed, random_ris, no_ris
    trials = 20
    seed = 7
    out = results/pb
    cases = small: n_u_x=4 n_u_y=4; large: n_u_x=8 n_u_y=8

Keys left out of ``[experiment]`` come from the preset named by ``name``.
Each case is a labelled set of config overrides; the case label is appended
to the experiment column of ``results.csv`` as ``name/label``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bcd import ResultTable, SchemeId, monte_carlo, trial_inputs
from .config import _FIELDS, SystemConfig, _parse_value, config_from_sections, dump_config, parse_ini
from .errors import ConfigError
from .trajectory import trajectory_to_csv

EXPERIMENT_NAMES = ("convergence", "tier_convergence", "user_scaling", "pb_sweep", "ps_sweep",
                    "ris_size_sweep", "trajectory_dump", "altitude_profiles", "flight_period_sweep",
                    "noise_sweep")
DEFAULT_TRIALS = 50
DESK_SLOTS = 10
DESK_TRIALS = 20
# sweep parameters that set more than one config field
COMPOSITE_SWEEPS = {"noise_dbm": ("noise_tbs_dbm", "noise_sat_dbm")}
CONVERGENCE_EXPERIMENTS = ("convergence", "tier_convergence", "user_scaling")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    sweep_param: str = ""
    sweep_values: tuple = ()
    schemes: tuple = ("proposed",)
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    out: str = "out"
    cases: tuple = ()  # ((label, ((key, value), ...)), ...)
    desk_sweep_values: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.name not in EXPERIMENT_NAMES:
            raise ConfigError(f"experiment.name: unknown experiment {self.name!r}")
        if not self.schemes:
            raise ConfigError("experiment.schemes: must name at least one scheme")
        for s in self.schemes:
            try:
                SchemeId(s)
            except ValueError:
                raise ConfigError(f"experiment.schemes: unknown scheme {s!r}") from None
        if isinstance(self.trials, bool) or not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError(f"experiment.trials: must be a positive integer (got {self.trials!r})")
        if self.sweep_values and not self.sweep_param:
            raise ConfigError("experiment.sweep_param: required when sweep_values are given")
        if self.sweep_param and not self.sweep_values:
            raise ConfigError("experiment.sweep_values: required when sweep_param is given")
        if self.sweep_param and self.sweep_param not in COMPOSITE_SWEEPS and self.sweep_param not in _FIELDS:
            raise ConfigError(f"experiment.sweep_param: unknown parameter {self.sweep_param!r}")
        if any(b <= a for a, b in zip(self.sweep_values, self.sweep_values[1:])):
            raise ConfigError("experiment.sweep_values: must be strictly increasing")
        labels = [label for label, _ in self.cases]
        if len(set(labels)) != len(labels):
            raise ConfigError("experiment.cases: labels must be unique")

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)


def _cases(*items) -> tuple:
    return tuple((label, tuple(changes.items())) for label, changes in items)


POWER_SCHEMES = ("proposed", "random_ris", "no_ris", "fixed_trajectory")
PB_VALUES = (40.0, 42.0, 44.0, 46.0, 47.0)

PRESETS = {
    "convergence": ExperimentSpec("convergence", schemes=POWER_SCHEMES),
    "tier_convergence": ExperimentSpec("tier_convergence", schemes=("proposed", "random_ris", "no_ris")),
    "user_scaling": ExperimentSpec("user_scaling", cases=_cases(
        ("K3_L4", {"k_users": 3, "l_users": 4}), ("K6_L4", {"k_users": 6, "l_users": 4}),
        ("K3_L8", {"k_users": 3, "l_users": 8}), ("K6_L8", {"k_users": 6, "l_users": 8}))),
    "pb_sweep": ExperimentSpec("pb_sweep", "p_b_dbm", PB_VALUES, POWER_SCHEMES),
    "ps_sweep": ExperimentSpec("ps_sweep", "p_s_dbm", (50.0, 52.0, 54.0, 56.0, 57.0), POWER_SCHEMES),
    "ris_size_sweep": ExperimentSpec("ris_size_sweep", "p_b_dbm", PB_VALUES, cases=_cases(
        ("NU16_NH36", {"n_u_x": 4, "n_u_y": 4, "n_h_x": 6, "n_h_y": 6}),
        ("NU36_NH64", {"n_u_x": 6, "n_u_y": 6, "n_h_x": 8, "n_h_y": 8}),
        ("NU64_NH100", {"n_u_x": 8, "n_u_y": 8, "n_h_x": 10, "n_h_y": 10}))),
    "trajectory_dump": ExperimentSpec("trajectory_dump", trials=1),
    "altitude_profiles": ExperimentSpec("altitude_profiles", trials=1),
    "flight_period_sweep": ExperimentSpec(
        "flight_period_sweep", "n_slots", (20.0, 40.0, 60.0, 80.0, 100.0),
        ("proposed", "random_ris", "fixed_trajectory"), desk_sweep_values=(4.0, 6.0, 8.0, 10.0, 12.0)),
    "noise_sweep": ExperimentSpec(
        "noise_sweep", "noise_dbm", (-100.0, -95.0, -90.0, -85.0, -80.0),
        ("proposed", "tbs_only", "sat_only"), cases=_cases(
            ("Mb8_Ms32", {"m_b": 8, "m_s_x": 8, "m_s_y": 4}),
            ("Mb16_Ms64", {"m_b": 16, "m_s_x": 8, "m_s_y": 8}))),
}


def desk_scale(config: SystemConfig, spec: ExperimentSpec) -> tuple[SystemConfig, ExperimentSpec]:
    """Reduced workload: N = 10 slots, 20 trials, RCG and SCA iteration caps halved."""
    cfg = config.replace(n_slots=DESK_SLOTS, t_max_m=max(1, config.t_max_m // 2),
                         t_max_q=max(1, config.t_max_q // 2))
    changes = {"trials": min(spec.trials, DESK_TRIALS)}
    if spec.desk_sweep_values is not None:
        changes["sweep_values"] = spec.desk_sweep_values
    return cfg, spec.replace(**changes)


# --- config files ------------------------------------------------------------------

def _format_number(value) -> str:
    value = float(value)
    return str(int(value)) if value.is_integer() and abs(value) < 2 ** 53 else format(value, ".17g")


def _format_cases(cases) -> str:
    return "; ".join(f"{label}: " + " ".join(f"{k}={v}" for k, v in changes) for label, changes in cases)


def _parse_cases(text: str) -> tuple:
    out = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        label, sep, body = chunk.partition(":")
        if not sep or not label.strip():
            raise ConfigError(f"experiment.cases: expected 'label: key=value ...' (got {chunk!r})")
        changes = []
        for item in body.split():
            key, eq, value = item.partition("=")
            if not eq or key not in _FIELDS:
                raise ConfigError(f"experiment.cases: bad override {item!r}")
            changes.append((key, _parse_value(key, value)))
        out.append((label.strip(), tuple(changes)))
    return tuple(out)


def spec_to_section(spec: ExperimentSpec) -> dict[str, str]:
    return {
        "name": spec.name,
        "sweep_param": spec.sweep_param,
        "sweep_values": ", ".join(_format_number(v) for v in spec.sweep_values),
        "schemes": ", ".join(spec.schemes),
        "trials": str(spec.trials),
        "seed": str(spec.seed),
        "out": spec.out,
        "cases": _format_cases(spec.cases),
    }


def spec_from_section(items: dict[str, str]) -> ExperimentSpec:
    known = {"name", "sweep_param", "sweep_values", "schemes", "trials", "seed", "out", "cases"}
    for key in items:
        if key not in known:
            raise ConfigError(f"experiment.{key}: unknown key")
    name = items.get("name", "convergence").strip()
    if name not in PRESETS:
        raise ConfigError(f"experiment.name: unknown experiment {name!r}")
    spec = PRESETS[name]
    changes: dict = {}
    try:
        if "sweep_param" in items:
            changes["sweep_param"] = items["sweep_param"].strip()
        if "sweep_values" in items:
            text = items["sweep_values"].strip()
            changes["sweep_values"] = tuple(float(v) for v in text.split(",")) if text else ()
        if "trials" in items:
            changes["trials"] = int(items["trials"])
        if "seed" in items:
            changes["seed"] = int(items["seed"])
    except ValueError as exc:
        raise ConfigError(f"experiment: cannot parse value ({exc})") from None
    if "schemes" in items:
        changes["schemes"] = tuple(s.strip() for s in items["schemes"].split(",") if s.strip())
    if "out" in items:
        changes["out"] = items["out"].strip()
    if "cases" in items:
        changes["cases"] = _parse_cases(items["cases"])
    if "sweep_values" in changes or "sweep_param" in changes:
        changes["desk_sweep_values"] = None  # explicit sweeps are never rescaled
    return spec.replace(**changes)


def load_config_text(text: str) -> tuple[SystemConfig, ExperimentSpec]:
    sections = parse_ini(text)
    exp = sections.pop("experiment", {})
    return config_from_sections(sections), spec_from_section(exp)


def load_config(path) -> tuple[SystemConfig, ExperimentSpec]:
    """Read a config file; missing keys keep their defaults."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return load_config_text(text)


def resolved_config_text(config: SystemConfig, spec: ExperimentSpec) -> str:
    return dump_config(config, {"experiment": spec_to_section(spec)})


# --- running -----------------------------------------------------------------------

def sweep_changes(param: str, value: float) -> dict:
    keys = COMPOSITE_SWEEPS.get(param, (param,))
    out = {}
    for key in keys:
        out[key] = int(value) if isinstance(_FIELDS[key].default, int) else float(value)
    return out


def sweep_points(spec: ExperimentSpec):
    """(sweep_value text, config changes) per sweep point; one empty point without a sweep."""
    if not spec.sweep_param:
        return [("", {})]
    return [(_format_number(v), sweep_changes(spec.sweep_param, v)) for v in spec.sweep_values]


def experiment_runs(config: SystemConfig, spec: ExperimentSpec):
    """(experiment label, sweep value text, config) for every case and sweep point."""
    cases = spec.cases or (("", ()),)
    for label, case_changes in cases:
        name = f"{spec.name}/{label}" if label else spec.name
        base = config.replace(**dict(case_changes))
        for value, changes in sweep_points(spec):
            yield name, value, base.replace(**changes)


def check_writable(out_dir) -> Path:
    """Create ``out_dir`` if needed and prove it is writable; raises OSError."""
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=path, prefix=".aris-probe-"):
        pass
    return path


@dataclass
class ExperimentOutput:
    table: ResultTable
    files: dict  # file name -> text

    @property
    def reduced_precision_rows(self):
        return [r for r in self.table.rows if r.reduced_precision]


def convergence_csv(table: ResultTable) -> str:
    """Trial-mean history per scheme; finished trials hold their final value."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "scheme", "R_total", "R_tbs", "R_sat"])
    groups: dict = {}
    for r in table.rows:
        label = r.scheme if r.experiment.count("/") == 0 else f"{r.scheme}[{r.experiment.split('/', 1)[1]}]"
        if r.sweep_value:
            label = f"{label}@{r.sweep_value}"
        groups.setdefault(label, []).append(r)
    for label, rows in groups.items():
        length = max(len(r.history) for r in rows)

        def padded(seq):
            return np.array([list(seq) + [seq[-1]] * (length - len(seq))], float)

        tot = np.mean(np.vstack([padded(r.history) for r in rows]), axis=0)
        tbs = np.mean(np.vstack([padded(r.history_tbs) for r in rows]), axis=0)
        sat = np.mean(np.vstack([padded(r.history_sat) for r in rows]), axis=0)
        for i in range(length):
            w.writerow([i, label, format(tot[i], ".17g"), format(tbs[i], ".17g"), format(sat[i], ".17g")])
    return buf.getvalue()


def _trajectory_prefix(row):
    return [("experiment", row.experiment), ("scheme", row.scheme), ("sweep_value", row.sweep_value),
            ("trial", row.trial), ("path", "")]


def trajectory_csv(table: ResultTable, initial: dict) -> str:
    """Initial and optimized 3D paths of both platforms for every kept trial."""
    parts = []
    header = True
    for row in table.rows:
        if row.state is None:
            continue
        init_u, init_h = initial[(row.experiment, row.sweep_value, row.trial)]
        for kind, (u, h) in (("initial", (init_u, init_h)), ("optimized", (row.state.uav, row.state.hap))):
            prefix = _trajectory_prefix(row)
            prefix[-1] = ("path", kind)
            parts.append(trajectory_to_csv(u, h, header, prefix))
            header = False
    return "".join(parts)


def altitude_csv(table: ResultTable, initial: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "scheme", "sweep_value", "trial", "slot", "platform", "z_initial", "z_optimized"])
    for row in table.rows:
        if row.state is None:
            continue
        init_u, init_h = initial[(row.experiment, row.sweep_value, row.trial)]
        for name, z0, z1 in (("uav", init_u[:, 2], row.state.uav[:, 2]), ("hap", init_h[:, 2], row.state.hap[:, 2])):
            for n in range(z0.shape[0]):
                w.writerow([row.experiment, row.scheme, row.sweep_value, row.trial, n, name,
                            format(float(z0[n]), ".17g"), format(float(z1[n]), ".17g")])
    return buf.getvalue()


def run_experiment(spec: ExperimentSpec, config: SystemConfig, timing: bool = False,
                   write: bool = True, workers: int | None = None) -> ExperimentOutput:
    """Run every case, sweep point, scheme and trial, then write the CSV files."""
    out_dir = check_writable(spec.out) if write else None
    keep = spec.name in ("trajectory_dump", "altitude_profiles")
    table = ResultTable()
    initial = {}
    for name, value, cfg in experiment_runs(config, spec):
        part = monte_carlo(cfg, spec.schemes, spec.trials, spec.seed, name, spec.sweep_param, value,
                           keep_state=keep, workers=workers)
        table.rows.extend(part.rows)
        if keep:
            for t in range(spec.trials):
                scenario, _ = trial_inputs(cfg, spec.seed, t)
                initial[(name, value, t)] = (scenario.uav_init_traj.points, scenario.hap_init_traj.points)
    files = {"results.csv": table.to_csv(timing), "config_resolved.txt": resolved_config_text(config, spec)}
    if spec.name in CONVERGENCE_EXPERIMENTS:
        files["convergence.csv"] = convergence_csv(table)
    if spec.name == "trajectory_dump":
        files["trajectory.csv"] = trajectory_csv(table, initial)
    if spec.name == "altitude_profiles":
        files["altitude.csv"] = altitude_csv(table, initial)
    if write:
        for fname, text in files.items():
            (out_dir / fname).write_text(text)
    return ExperimentOutput(table, files)


def preset(name: str) -> ExperimentSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"experiment.name: unknown preset {name!r}") from None


def describe_presets() -> str:
    lines = []
    for name in EXPERIMENT_NAMES:
        s = PRESETS[name]
        sweep = f"{s.sweep_param} in {{{', '.join(_format_number(v) for v in s.sweep_values)}}}" if s.sweep_param else "no sweep"
        cases = f", cases {', '.join(c for c, _ in s.cases)}" if s.cases else ""
        lines.append(f"{name}: {sweep}; schemes {', '.join(s.schemes)}{cases}")
    return "\n".join(lines)

