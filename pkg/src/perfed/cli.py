"""Command-line entry point.

Subcommands:
  run        execute one experiment (generated-sample federation or a baseline)
  partition  write the partition preview CSV only
  bound      evaluate the co-training bound from flags
  mc         Monte-Carlo validation of the bound
  sweep      repeat `run` across a beta list or a GAN-steps list

Every run requires an explicit seed (config ``master_seed`` or ``--seed``);
there is no wall-clock seeding. Exit codes: 0 success, 1 failure with a
single-line categorized error, 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, SimulationError
from .experiment import METHODS, build_clients, run_and_emit, write_partition_csv
from .metrics import _fmt, _write_atomic
from .theory import BoundInputs, McSpec, compute_bound, mc_validate

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perfed",
        description="Seeded simulator for federated co-training via generated-sample sharing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="path to a JSON experiment config")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides the config's master_seed)")
        p.add_argument("--out-dir", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="max concurrent client phases (never changes results)")

    run_p = sub.add_parser("run", help="run one experiment")
    add_common(run_p)
    run_p.add_argument("--baseline", choices=["local", "fedavg", "fedprox", "perfed"],
                       default="perfed", help="method to run (default: perfed)")
    run_p.add_argument("--beta", type=float, default=None, help="override fed.beta")
    run_p.add_argument("--gan-steps", type=int, default=None, help="override fed.gan.steps")

    part_p = sub.add_parser("partition", help="write partition.csv and stop")
    add_common(part_p)

    bound_p = sub.add_parser("bound", help="evaluate the co-training bound")
    bound_p.add_argument("--a0", type=float, required=True)
    bound_p.add_argument("--b0", type=float, required=True)
    bound_p.add_argument("--s1", type=int, required=True)
    bound_p.add_argument("--s2", type=int, required=True)
    bound_p.add_argument("--g", type=int, required=True)
    bound_p.add_argument("--delta", type=float, required=True)
    bound_p.add_argument("--hsize", type=int, required=True, help="hypothesis class size")
    bound_p.add_argument("--d12", type=float, required=True,
                         help="disagreement between helper and retrained classifier")

    mc_p = sub.add_parser("mc", help="Monte-Carlo validation over threshold classifiers")
    mc_p.add_argument("--domain", type=int, default=200, help="discrete domain size")
    mc_p.add_argument("--a0", type=float, default=0.1)
    mc_p.add_argument("--b0", type=float, default=0.2)
    mc_p.add_argument("--s1", type=int, default=100)
    mc_p.add_argument("--s2", type=int, default=100)
    mc_p.add_argument("--g", type=int, default=500)
    mc_p.add_argument("--delta", type=float, default=0.05)
    mc_p.add_argument("--trials", type=int, default=2000)
    mc_p.add_argument("--seed", type=int, required=True)

    sweep_p = sub.add_parser("sweep", help="run across a beta or GAN-steps list")
    add_common(sweep_p)
    sweep_p.add_argument("--beta", default=None,
                         help="comma-separated beta values, e.g. 1,2,4,8")
    sweep_p.add_argument("--gan-steps", default=None,
                         help="comma-separated GAN step counts")
    return parser


def _resolve_seed(cfg, flag_seed) -> int:
    if flag_seed is not None:
        return flag_seed
    if cfg.master_seed is not None:
        return cfg.master_seed
    raise ConfigError("no seed: set master_seed in the config or pass --seed")


def _resolve_out_dir(cfg, flag_out) -> Path:
    target = flag_out if flag_out is not None else cfg.out_dir
    if target is None:
        raise ConfigError("no output directory: set out_dir in the config or pass --out-dir")
    return Path(target)


def _override(cfg, beta=None, gan_steps=None):
    from dataclasses import replace

    if beta is not None:
        if beta <= 0:
            raise ConfigError(f"fed.beta: must be positive, got {beta}")
        cfg = replace(cfg, beta=beta)
    if gan_steps is not None:
        if gan_steps < 0:
            raise ConfigError(f"fed.gan.steps: must be >= 0, got {gan_steps}")
        cfg = replace(cfg, gan_opts=replace(cfg.gan_opts, steps=gan_steps))
    return cfg


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    cfg = _override(cfg, args.beta, args.gan_steps)
    seed = _resolve_seed(cfg, args.seed)
    out_dir = _resolve_out_dir(cfg, args.out_dir)
    method = "perfed" if args.baseline == "perfed" else args.baseline
    result = run_and_emit(cfg, seed, out_dir, method=method, jobs=args.jobs)
    print(f"final_mrta={_fmt(result.log.final_mrta())}")
    print(f"out_dir={out_dir}")
    return 0


def _cmd_partition(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(cfg, args.seed)
    out_dir = _resolve_out_dir(cfg, args.out_dir)
    clients, _, _ = build_clients(cfg, seed)
    path = write_partition_csv(clients, out_dir)
    print(f"partition={path}")
    return 0


def _cmd_bound(args) -> int:
    inputs = BoundInputs(
        a0=args.a0, b0=args.b0, s1=args.s1, s2=args.s2, g=args.g,
        delta=args.delta, h_space_size=args.hsize, d12=args.d12,
    )
    report = compute_bound(inputs)
    payload = report.as_dict()
    for key, value in payload.items():
        if isinstance(value, bool):
            print(f"{key}={str(value).lower()}")
        else:
            print(f"{key}={_fmt(value)}")
    print(json.dumps({k: v for k, v in payload.items()}, sort_keys=True))
    return 0


def _cmd_mc(args) -> int:
    spec = McSpec(
        domain_size=args.domain, a0_target=args.a0, b0_target=args.b0,
        s1=args.s1, s2=args.s2, g=args.g, delta=args.delta, trials=args.trials,
    )
    report = mc_validate(spec, args.seed)
    print(f"trials={report.trials}")
    print(f"violations={report.violations}")
    print(f"violation_rate={_fmt(report.violation_rate)}")
    print(f"delta={_fmt(report.delta)}")
    return 0


def _parse_list(raw: str, kind, flag: str):
    try:
        values = [kind(part) for part in raw.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"{flag}: expected a comma-separated list, got {raw!r}") from exc
    if not values:
        raise ConfigError(f"{flag}: empty list")
    return values


def _cmd_sweep(args) -> int:
    if (args.beta is None) == (args.gan_steps is None):
        raise ConfigError("sweep needs exactly one of --beta or --gan-steps")
    cfg = load_config(args.config)
    seed = _resolve_seed(cfg, args.seed)
    out_root = _resolve_out_dir(cfg, args.out_dir)

    if args.beta is not None:
        points = _parse_list(args.beta, float, "--beta")
        column, tag = "beta", "beta"
    else:
        points = _parse_list(args.gan_steps, int, "--gan-steps")
        column, tag = "gan_steps", "steps"

    rows = [f"{column},final_mrta"]
    for value in points:
        sub_cfg = _override(
            cfg,
            beta=value if column == "beta" else None,
            gan_steps=value if column == "gan_steps" else None,
        )
        sub_dir = out_root / f"{tag}_{value:g}" if isinstance(value, float) else out_root / f"{tag}_{value}"
        result = run_and_emit(sub_cfg, seed, sub_dir, method="perfed", jobs=args.jobs)
        rows.append(f"{value:g},{_fmt(result.log.final_mrta())}"
                    if isinstance(value, float)
                    else f"{value},{_fmt(result.log.final_mrta())}")
        print(f"{column}={value} final_mrta={_fmt(result.log.final_mrta())}")
    out_root.mkdir(parents=True, exist_ok=True)
    _write_atomic(out_root / "sweep.csv", "\n".join(rows) + "\n")
    print(f"sweep={out_root / 'sweep.csv'}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "partition": _cmd_partition,
    "bound": _cmd_bound,
    "mc": _cmd_mc,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return _COMMANDS[args.command](args)
    except SimulationError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
