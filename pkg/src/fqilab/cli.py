"""Command-line entry point: collect, train, eval, run, report, verify-theory.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data import collect, load as load_dataset, save as save_dataset, take_prefix
from .envs import make_env
from .experiment import (
    ConfigError,
    load_config,
    report as aggregate_report,
    run_experiment,
    train_arm,
    evaluate_run,
    RESULTS_HEADER,
    _format_row,
)
from .losses import LossKind
from .theory import verify_all


def _add_common(parser):
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the dataset base seed")
    parser.add_argument("--preset", choices=("desk", "full"), default="desk")


def _load(args):
    config = load_config(args.config, preset=args.preset)
    if args.seed is not None:
        from dataclasses import replace
        config = replace(config, dataset_seed=args.seed)
    return config


def _dataset_path(out_dir, trial_seed):
    return os.path.join(out_dir, f"dataset_seed{trial_seed}.txt")


def cmd_collect(args) -> int:
    config = _load(args)
    os.makedirs(args.out, exist_ok=True)
    env = make_env(config.env_name, **config.env_overrides)
    for seed in config.trial_seeds:
        dataset = collect(env, max(config.n_grid), config.required_successes,
                          seed, config.horizon)
        path = _dataset_path(args.out, seed)
        save_dataset(dataset, path)
        print(f"wrote {path} ({len(dataset)} transitions, "
              f"{dataset.n_successful} successful episodes)")
    return 0


def cmd_train(args) -> int:
    config = _load(args)
    os.makedirs(args.out, exist_ok=True)
    env = make_env(config.env_name, **config.env_overrides)
    for seed in config.trial_seeds:
        path = _dataset_path(args.out, seed)
        if os.path.exists(path):
            dataset = load_dataset(path, expected_env=config.env_name)
        else:
            dataset = collect(env, max(config.n_grid), config.required_successes,
                              seed, config.horizon)
        for n in config.n_grid:
            subset = take_prefix(dataset, n)
            payload = {"trial_seed": seed, "n_trajectories": n, "arms": {}}
            for loss in (LossKind.LOG, LossKind.SQUARED):
                run = train_arm(config, subset, loss)
                payload["arms"][loss.value] = {
                    "mode": run.mode,
                    "losses": [float(v) for v in run.losses],
                    "params": [np.asarray(p).ravel().tolist() for p in run.params],
                }
            out = os.path.join(args.out, f"train_seed{seed}_n{n}.json")
            with open(out, "w") as fh:
                json.dump(payload, fh)
            print(f"wrote {out}")
    return 0


def cmd_eval(args) -> int:
    config = _load(args)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    from .fqi import FqiRun
    from .experiment import _model_class, RESULTS_SCHEMA
    env = make_env(config.env_name, **config.env_overrides)
    model_class = _model_class(config, env)
    for trial, seed in enumerate(config.trial_seeds):
        for n in config.n_grid:
            path = os.path.join(args.out, f"train_seed{seed}_n{n}.json")
            with open(path) as fh:
                payload = json.load(fh)
            for loss_name, arm in payload["arms"].items():
                run = FqiRun(arm["mode"], config.arm_config(LossKind.parse(loss_name)),
                             model_class, [np.asarray(p) for p in arm["params"]],
                             arm["losses"], [None] * len(arm["params"]))
                metric_name, mean, se = evaluate_run(config, run, trial)
                rows.append({
                    "schema": RESULTS_SCHEMA, "env": config.env_name,
                    "loss": loss_name, "n_trajectories": n,
                    "required_successes": config.required_successes,
                    "trial_seed": seed, "metric_name": metric_name,
                    "metric_mean": mean, "metric_se": se, "status": "ok",
                })
    results = os.path.join(args.out, "results.csv")
    with open(results, "w") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for row in rows:
            fh.write(_format_row(row) + "\n")
    print(f"wrote {results} ({len(rows)} rows)")
    return 0


def cmd_run(args) -> int:
    config = _load(args)
    rows = run_experiment(config, args.out)
    failures = sum(1 for r in rows if r["status"] != "ok")
    print(f"wrote {os.path.join(args.out, 'results.csv')} "
          f"({len(rows)} rows, {failures} failures)")
    return 0 if failures == 0 else 3


def cmd_report(args) -> int:
    _, paths = aggregate_report(args.results, args.out)
    for path in paths:
        print(f"wrote {path}")
    return 0


def cmd_verify_theory(args) -> int:
    reports = verify_all(args.seed, args.instances)
    for rec in reports:
        print(rec.line())
    if args.out:
        payload = {"seed": args.seed, "instances": args.instances,
                   "reports": [rec.to_dict() for rec in reports]}
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
        print(f"wrote {args.out}")
    return 0 if all(rec.passed for rec in reports) else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fqilab")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("collect", cmd_collect), ("train", cmd_train),
                     ("eval", cmd_eval), ("run", cmd_run)):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("report")
    p.add_argument("results", nargs="+", help="results.csv files to aggregate")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("verify-theory")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--instances", type=int, default=10000)
    p.add_argument("--out", default=None, help="JSON report path")
    p.set_defaults(fn=cmd_verify_theory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
