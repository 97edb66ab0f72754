"""Command-line front end: ``hgg run | compare | ablate | eval``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .agent import DDPGAgent
from .envs import make_env
from .harness import (
    ConfigError,
    aggregate_runs,
    check_outdir,
    coerce_settings,
    parse_seeds,
    resolve_config,
    run_experiment,
    write_summary,
)
from .training import evaluate

# flag name -> RunConfig field
FLAG_FIELDS = {
    "env": "env",
    "mode": "mode",
    "seed": "seed",
    "iters": "iterations",
    "K": "K",
    "L": "L",
    "c": "c",
    "gamma": "gamma",
    "goal_noise": "goal_noise",
    "pool_size": "pool_size",
    "goal_metric": "goal_metric",
    "hidden": "hidden",
    "eval_episodes": "eval_episodes",
    "batches": "batches_per_episode",
}


def _add_run_flags(p):
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--env", help="desk-reach, desk-push or desk-push-wall")
    p.add_argument("--mode", help="hgg or her (her-baseline)")
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int, help="training iterations")
    p.add_argument("--K", type=int, help="episodes (hindsight goals) per iteration")
    p.add_argument("--L", type=float, help="Lipschitz constant")
    p.add_argument("--c", type=float, help="initial-state distance weight")
    p.add_argument("--gamma", type=float)
    p.add_argument("--goal-noise", type=float)
    p.add_argument("--pool-size", type=int)
    p.add_argument("--goal-metric", help="euclidean or polyline-crafted")
    p.add_argument("--hidden", help="hidden layer sizes, e.g. 64,64")
    p.add_argument("--eval-episodes", type=int)
    p.add_argument("--batches", type=int, help="replay batches per collected episode")
    p.add_argument("--outdir", default="runs/latest")
    p.add_argument("--snapshot-every", type=int, default=10, help="goal snapshot cadence (0 disables)")
    p.add_argument("--quiet", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="hgg", description="Hindsight goal generation on desk-scale tasks.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train a single run")
    _add_run_flags(run)

    cmp_ = sub.add_parser("compare", help="run several modes over several seeds")
    _add_run_flags(cmp_)
    cmp_.add_argument("--modes", default="her,hgg")
    cmp_.add_argument("--seeds", default="1..10")

    abl = sub.add_parser("ablate", help="sweep one parameter over several values")
    _add_run_flags(abl)
    abl.add_argument("--param", required=True, help="config field to vary, e.g. L or c")
    abl.add_argument("--values", required=True, help="comma-separated values")
    abl.add_argument("--seeds", default="1")

    ev = sub.add_parser("eval", help="evaluate a saved agent checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--env", default="desk-push")
    ev.add_argument("--episodes", type=int, default=100)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--step-scale", type=float, default=0.05)
    return parser


def _overrides(args):
    out = {}
    for flag, field in FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            out[field] = value
    return out


def _progress(quiet):
    if quiet:
        return None

    def show(cfg, r):
        print(
            f"[{cfg.env} {cfg.mode} seed={cfg.seed}] iter {r.iteration:4d}  episodes {r.episodes:6d}  "
            f"success {r.success_rate:.2f}  W {r.goal_target_wasserstein:.3f}",
            flush=True,
        )

    return show


def cmd_run(args):
    config = resolve_config(args.config, _overrides(args))
    run_experiment(config, args.outdir, snapshot_every=args.snapshot_every, progress=_progress(args.quiet))
    print(f"wrote {Path(args.outdir) / 'curve.csv'}")
    return 0


def _sweep(base, labelled_configs, outdir, args):
    out = check_outdir(outdir)
    summaries = {}
    for label, configs in labelled_configs:
        paths = []
        for cfg in configs:
            run_dir = out / label / f"seed{cfg.seed}"
            run_experiment(cfg, run_dir, snapshot_every=args.snapshot_every, progress=_progress(args.quiet))
            paths.append(run_dir / "curve.csv")
        summaries[label] = aggregate_runs(paths)
    return out, summaries


def cmd_compare(args):
    base = resolve_config(args.config, _overrides(args))
    seeds = parse_seeds(args.seeds)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    groups = []
    for mode in modes:
        groups.append((mode, [replace(base, mode=mode, seed=s) for s in seeds]))
    out, summaries = _sweep(base, groups, args.outdir, args)
    write_summary(out / "summary.csv", summaries)
    print(f"wrote {out / 'summary.csv'}")
    return 0


def cmd_ablate(args):
    base = resolve_config(args.config, _overrides(args))
    field = args.param.replace("-", "_")
    if field not in base.field_names():
        raise ConfigError(f"unknown parameter {args.param!r}")
    seeds = parse_seeds(args.seeds)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("no values to sweep")
    groups = []
    for v in values:
        typed = coerce_settings({field: v})[field]
        groups.append((f"{field}={v}", [replace(base, **{field: typed}, seed=s) for s in seeds]))
    out, summaries = _sweep(base, groups, args.outdir, args)
    for label, summary in summaries.items():
        write_summary(out / f"curve_{label.replace('=', '_')}.csv", {label: summary})
    write_summary(out / "summary.csv", summaries)
    print(f"wrote {len(summaries)} curves to {out}")
    return 0


def cmd_eval(args):
    if args.episodes < 1:
        raise ConfigError("--episodes must be >= 1")
    env = make_env(args.env, step_scale=args.step_scale)
    agent = DDPGAgent.load(args.checkpoint)
    if agent.obs_dim != env.observation_dim or agent.goal_dim != env.spec.goal_dim:
        raise ConfigError(f"checkpoint does not fit environment {args.env}")
    rate = evaluate(agent, env, args.episodes, np.random.default_rng(args.seed))
    print(f"success_rate = {rate!r}")
    return 0


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "ablate": cmd_ablate, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"hgg {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
