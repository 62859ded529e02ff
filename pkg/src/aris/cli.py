"""Command-line entry point: ``aris run <config>`` and ``aris presets list|run``."""

from __future__ import annotations

import argparse
import sys

from .bcd import worker_count
from .config import SystemConfig
from .errors import ArisError
from .experiments import describe_presets, desk_scale, load_config, preset, run_experiment


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="base seed of the trial seed stream")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per scheme and sweep point")
    common.add_argument("--out", help="output directory")
    common.add_argument("--timing", action="store_true", help="fill the wall_time_ms column")
    common.add_argument("--scale", choices=("desk", "paper"), default=None,
                        help="desk: 10 slots, 20 trials, halved RCG/SCA caps")

    p = argparse.ArgumentParser(prog="aris", description="Dual aerial-RIS network simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run the experiment described by a config file")
    run.add_argument("config", help="INI config file")
    presets = sub.add_parser("presets", help="built-in experiments")
    psub = presets.add_subparsers(dest="action", required=True)
    psub.add_parser("list", help="list the presets")
    prun = psub.add_parser("run", parents=[common], help="run a preset")
    prun.add_argument("name")
    return p


def _apply_overrides(config, spec, args):
    if args.scale == "desk":
        config, spec = desk_scale(config, spec)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.out is not None:
        changes["out"] = args.out
    return config, spec.replace(**changes) if changes else spec


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "presets" and args.action == "list":
            print(describe_presets())
            return 0
        if args.command == "run":
            config, spec = load_config(args.config)
        else:
            config, spec = SystemConfig(), preset(args.name)
        config, spec = _apply_overrides(config, spec, args)
        output = run_experiment(spec, config, timing=args.timing, workers=worker_count())
    except (ArisError, OSError, ValueError) as exc:
        print(f"aris: error: {exc}", file=sys.stderr)
        return 2
    flagged = output.reduced_precision_rows
    print(f"wrote {', '.join(sorted(output.files))} to {spec.out} ({len(output.table.rows)} rows)")
    if flagged:
        print(f"aris: {len(flagged)} trial(s) finished with reduced precision:", file=sys.stderr)
        for r in flagged:
            print(f"  {r.experiment} scheme={r.scheme} sweep={r.sweep_value or '-'} trial={r.trial}",
                  file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
