"""Command-line entry point: train, eval, compare, sweep-loe, plot.

Every mutating command takes a single JSON config, echoes the fully resolved
config into the output directory, and holds a lock file there for the duration
of the invocation. Exit status is nonzero with a one-line diagnostic on config
errors, missing files, or aborted runs.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import os
import sys

from . import config as cfgmod
from . import harness, plotting
from .harness import ConfigError, ExperimentConfig
from .landing import LandingEnv
from .ppo import save_policy, train_ppo
from .simcore import trajectory_from_csv


@contextlib.contextmanager
def _output_lock(output_dir: str):
    os.makedirs(output_dir, exist_ok=True)
    lock = os.path.join(output_dir, ".lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"output directory is locked by another invocation ({lock}); "
            "remove the stale lock file if no run is active"
        )
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        os.unlink(lock)


def _prepare(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.output_dir, exist_ok=True)
    cfgmod.echo_config(cfg, os.path.join(cfg.output_dir, "config.resolved.json"))


def _write_training_log(costs, path) -> None:
    with open(path, "w") as fh:
        fh.write("batch,mean_episodic_cost\n")
        for i, c in enumerate(costs):
            fh.write(f"{i + 1},{repr(float(c))}\n")


def cmd_train(args) -> int:
    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, ppo=dataclasses.replace(cfg.ppo, rng_seed=args.seed))
    with _output_lock(cfg.output_dir):
        _prepare(cfg)
        name = "dr-rl" if args.domain_randomized else "rl"
        env = LandingEnv(
            cfg.task,
            domain_randomized=args.domain_randomized,
            curriculum_episodes=cfg.ppo.curriculum_episodes,
        )
        result = train_ppo(env, cfg.ppo)
        policy_dir = os.path.join(cfg.output_dir, "policies")
        os.makedirs(policy_dir, exist_ok=True)
        policy_path = os.path.join(policy_dir, f"{name}.json")
        save_policy(result.policy, policy_path)
        log_csv = os.path.join(cfg.output_dir, f"training_log_{name}.csv")
        _write_training_log(result.batch_mean_costs, log_csv)
        plotting.plot_training_log(
            result.batch_mean_costs, log_csv[:-4] + ".svg", os.path.basename(log_csv)
        )
        print(f"trained {name} policy -> {policy_path} "
              f"({len(result.batch_mean_costs)} batches, "
              f"{result.aborted_updates} aborted updates)")
    return 0


def cmd_eval(args) -> int:
    cfg = cfgmod.load_config(args.config)
    if not os.path.exists(args.policy):
        raise ConfigError(f"policy file not found: {args.policy}")
    cfg = dataclasses.replace(
        cfg, policies={**cfg.policies, harness.policy_key(args.condition): args.policy}
    )
    with _output_lock(cfg.output_dir):
        _prepare(cfg)
        rows = harness.success_table(cfg, conditions=[args.condition])
        for r in rows:
            mst = f"{r.mean_success_time:.3f}s" if r.mean_success_time is not None else "n/a"
            print(
                f"condition={r.condition} uncertainty={r.uncertainty} "
                f"episodes={r.episodes} successes={r.successes} "
                f"success_rate={r.success_rate:.3f} mean_success_time={mst}"
            )
    return 0


def cmd_compare(args) -> int:
    cfg = cfgmod.load_config(args.config)
    with _output_lock(cfg.output_dir):
        _prepare(cfg)
        rows = harness.success_table(cfg, force=args.force)
        csv_path = os.path.join(cfg.output_dir, "summary.csv")
        harness.write_summary_csv(rows, csv_path)
        plotting.plot_success_rates(
            rows, os.path.join(cfg.output_dir, "summary.svg"), os.path.basename(csv_path)
        )
        for r in rows:
            print(
                f"{r.condition}: rate={r.success_rate:.3f} "
                f"({r.successes}/{r.episodes})"
            )
        print(f"summary -> {csv_path}")
    return 0


def cmd_sweep_loe(args) -> int:
    cfg = cfgmod.load_config(args.config)
    try:
        betas = [float(b) for b in args.betas.split(",") if b.strip()]
    except ValueError as err:
        raise ConfigError(f"bad --betas list: {err}")
    if not betas:
        raise ConfigError("--betas must name at least one level")
    with _output_lock(cfg.output_dir):
        _prepare(cfg)
        rows = harness.loe_sweep(cfg, betas, force=args.force)
        csv_path = os.path.join(cfg.output_dir, "loe_sweep.csv")
        harness.write_loe_csv(rows, csv_path)
        plotting.plot_loe_sweep(
            rows, os.path.join(cfg.output_dir, "loe_sweep.svg"), os.path.basename(csv_path)
        )
        for r in rows:
            print(
                f"loe={r.loe_fraction:.0%}: rl={r.rl_success_rate:.3f} "
                f"mrac-rl={r.mracrl_success_rate:.3f}"
            )
        print(f"sweep -> {csv_path}")
    return 0


def cmd_plot(args) -> int:
    paths = [p for p in args.trajectories.split(",") if p.strip()]
    if not paths:
        raise ConfigError("--trajectories must name at least one CSV file")
    for p in paths:
        if not os.path.exists(p):
            raise ConfigError(f"trajectory file not found: {p}")
    trajectories = [trajectory_from_csv(p) for p in paths]
    labels = [os.path.splitext(os.path.basename(p))[0] for p in paths]
    plotting.plot_rollouts(trajectories, labels, args.out, sources=paths)
    print(f"figure -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mracrl",
        description="Adaptive-inner-loop / learned-outer-loop quadrotor landing benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a landing policy from the config")
    p.add_argument("--config", required=True)
    p.add_argument("--domain-randomized", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate one condition with a given policy file")
    p.add_argument("--config", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--condition", required=True, choices=list(harness.CONDITIONS))
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("compare", help="paired-seed comparison across configured conditions")
    p.add_argument("--config", required=True)
    p.add_argument("--force", action="store_true", help="rerun completed seeds")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("sweep-loe", help="success-rate sweep over loss-of-effectiveness levels")
    p.add_argument("--config", required=True)
    p.add_argument("--betas", default="0.9,0.75,0.5,0.25")
    p.add_argument("--force", action="store_true", help="rerun completed seeds")
    p.set_defaults(fn=cmd_sweep_loe)

    p = sub.add_parser("plot", help="render rollout trajectory CSVs to an SVG figure")
    p.add_argument("--trajectories", required=True, help="comma-separated CSV paths")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
