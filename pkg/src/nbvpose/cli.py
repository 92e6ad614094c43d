"""Command-line entry point: ``nbvpose {calibrate,run,sweep,ablate}``.

Every ``ExperimentConfig`` field is also a ``--flag``. Values come from the
defaults, then ``--config FILE`` (``key = value`` lines), then explicit flags.
"""

import argparse
import csv
import sys
from dataclasses import fields, replace
from pathlib import Path

from .errors import NbvPoseError
from .harness import (
    POLICIES,
    ExperimentConfig,
    export,
    load_config,
    parse_config,
    run_calibration,
    run_experiment,
    sweep,
    write_manifest,
)
from .skeleton import DEFAULT_TOPOLOGY, JOINT_NAMES


def _add_config_flags(parser):
    group = parser.add_argument_group("experiment config")
    group.add_argument("--config", type=Path, help="key = value config file")
    for f in fields(ExperimentConfig):
        # values stay strings here and go through the config-file parser
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=argparse.SUPPRESS,
                           metavar=f.name.upper())


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None) is not None:
        cfg = load_config(args.config)
    names = {f.name for f in fields(ExperimentConfig)}
    text = "".join(f"{name} = {value}\n" for name, value in vars(args).items() if name in names)
    return parse_config(text, cfg, "<command line>")


def _seeds(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _policies(text):
    out = [p.strip() for p in text.split(",") if p.strip()]
    bad = [p for p in out if p not in POLICIES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown policies {bad}; choose from {', '.join(POLICIES)}")
    return out


def cmd_calibrate(args):
    cfg = _config(args)
    lengths = run_calibration(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "calibration.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bone", "parent", "child", "length"))
        for i, ((a, b), length) in enumerate(zip(DEFAULT_TOPOLOGY.bones, lengths)):
            w.writerow((i, JOINT_NAMES[a], JOINT_NAMES[b], repr(float(length))))
            print(f"{JOINT_NAMES[a]:>10s} -> {JOINT_NAMES[b]:<10s} {length:.4f} m")
    write_manifest(cfg, out / "manifest.txt")
    return 0


def cmd_run(args):
    cfg = _config(args)
    result = run_experiment(cfg)
    paths = export(result, args.out)
    print(f"{cfg.mode} {cfg.policy} {cfg.sequence} seed {cfg.seed}: mean mpjpe {result.mean_mpjpe:.4f} m "
          f"over {len(result.records)} frames")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def _print_summary(res):
    for row in res.summary:
        print(f"{row.policy:>24s}  {row.mean_mpjpe:.4f} +- {row.std_mpjpe:.4f} m  ({row.runs} runs)")


def cmd_sweep(args):
    cfg = _config(args)
    res = sweep(cfg, args.policies, args.seeds, args.out)
    _print_summary(res)
    return 0


def cmd_ablate(args):
    cfg = replace(_config(args), mode="flight", policy="active")
    variants = {"flight_model": {"use_flight_model": True}, "uniform_sampling": {"use_flight_model": False}}
    res = sweep(cfg, None, args.seeds, args.out, variants)
    _print_summary(res)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="nbvpose", description="Active next-best-view 3D pose experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="estimate bone lengths from ring views of the first frame")
    _add_config_flags(p)
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("run", help="one closed-loop run")
    _add_config_flags(p)
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="policies x seeds")
    _add_config_flags(p)
    p.add_argument("--policies", type=_policies, default=["active", "random"], help="comma-separated")
    p.add_argument("--seeds", type=_seeds, default=[0, 1, 2, 3, 4], help="comma-separated")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="flight model vs uniform sampling, flight mode")
    _add_config_flags(p)
    p.add_argument("--seeds", type=_seeds, default=[0, 1, 2], help="comma-separated")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NbvPoseError, ValueError, OSError) as exc:
        print(f"nbvpose: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
