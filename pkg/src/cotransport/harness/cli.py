"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..dynamics import DivergenceError
from .config import ConfigError, RunConfig, dump_config, load_config
from .experiment import evaluate, simulate, thrust_command
from .train import TrainingDiverged, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

log = logging.getLogger("cotransport")


def _load(path) -> RunConfig:
    return load_config(path) if path else RunConfig()


def cmd_train(args) -> int:
    config = _load(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.episodes is not None:
        config = config.replace(episodes=args.episodes)
    out = Path(args.out or config.output_dir)
    result = train(config, output_dir=out)
    print(f"trained {len(result.episodes)} episodes; checkpoint {result.checkpoint}; rewards {result.reward_log}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load(args.config)
    out = Path(args.out or Path(config.output_dir) / "eval")
    rows = evaluate(args.checkpoint, args.sweep, args.episodes_per_point, config.env, out, args.workers)
    for row in rows:
        print(
            f"cg_speed={row['cg_speed']:.2f} mass={row['object_mass']:.2f} "
            f"{row['termination']:<8} steps={row['steps']} final_distance={row['final_distance']:.3f}"
        )
    print(f"summary written to {out / f'sweep_{args.sweep}.csv'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _load(args.config)
    follower = "oracle" if args.oracle else args.checkpoint
    out = Path(args.out or Path(config.output_dir) / "trajectory.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    res = simulate(follower, config.env, out)
    print(
        f"{res.termination} after {res.steps} steps; final distance {res.final_distance:.3f} m; "
        f"mean action deviation {res.mean_deviation:.4f}; trajectory {out}"
    )
    return EXIT_OK


def cmd_export_thrust(args) -> int:
    config = _load(args.config)
    print(thrust_command(args.az, config.thrust))
    return EXIT_OK


def cmd_default_config(args) -> int:
    text = dump_config(RunConfig())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cotransport", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the SAC follower")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--episodes", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="CG-speed or object-mass robustness sweep")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sweep", choices=["cg", "mass"], required=True)
    p.add_argument("--episodes-per-point", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="one logged rollout")
    who = p.add_mutually_exclusive_group(required=True)
    who.add_argument("--checkpoint")
    who.add_argument("--oracle", action="store_true", help="follower copies the leader")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export-thrust", help="Crazyflie thrust counts for a vertical acceleration")
    p.add_argument("--az", type=float, required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_export_thrust)

    p = sub.add_parser("default-config", help="print the default configuration")
    p.add_argument("--out")
    p.set_defaults(func=cmd_default_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, DivergenceError) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
