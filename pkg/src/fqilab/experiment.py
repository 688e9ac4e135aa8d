"""Config-driven experiment orchestration: learning curves for both loss arms
on the same datasets, deterministic CSV emission, and aggregation.

Configs are line-oriented ``dotted.key=value`` text (no external config
language); every seed is explicit and echoed, together with the physics
constants and both arm configs, into a JSON run artifact.  The results CSV
contains only deterministic columns; wall-clock timings go to a sidecar file
so reruns are byte-identical.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bfgs import BfgsOptions
from .data import collect, take_prefix
from .envs import evaluate_policy, make_env, physics_dict
from .features import FourierBasis
from .fqi import FqiConfig, SigmoidModelClass, fqi_finite_horizon, fqi_stationary
from .losses import LossKind
from .rng import PRNG_NAME

RESULTS_SCHEMA = "fqilab-results-v1"
RESULTS_HEADER = ("schema,env,loss,n_trajectories,required_successes,trial_seed,"
                  "metric_name,metric_mean,metric_se,status")

MODE_FINITE_HORIZON = "finite_horizon"
MODE_STATIONARY = "stationary"


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict:
    """Dotted-key lines into a nested dict; '#' starts a comment."""
    out: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"malformed config line {raw!r}")
        node = out
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"config key conflict at {key!r}")
        node[parts[-1]] = _parse_value(value.strip())
    return out


def _parse_value(text: str):
    if "," in text:
        return [_parse_value(part) for part in text.split(",") if part != ""]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


DESK_PRESETS = {
    "mountain_car": {
        "env": {"name": "mountain_car"},
        "dataset": {"seed": 1, "n_grid": [250, 500, 1000, 2000, 3000],
                    "required_successes": 1, "horizon": 800},
        "fqi": {"mode": MODE_FINITE_HORIZON, "gamma": 1.0, "k": 1, "order": 4,
                "target_clip": True},
        "optimizer": {"grad_tol": 1e-5, "max_iters": 80},
        "eval": {"n_rollouts": 1, "max_steps": 800, "seed": 77},
        "trials": {"n": 10},
        "run": {"workers": 1},
    },
    "pendulum": {
        "env": {"name": "pendulum"},
        "dataset": {"seed": 1, "n_grid": [10, 20, 50, 100, 200, 400],
                    "required_successes": 0, "horizon": 1000},
        "fqi": {"mode": MODE_STATIONARY, "gamma": 0.95, "k": 100, "order": 4,
                "target_clip": True},
        "optimizer": {"grad_tol": 1e-5, "max_iters": 80},
        "eval": {"n_rollouts": 200, "max_steps": 3000, "seed": 77},
        "trials": {"n": 10},
        "run": {"workers": 1},
    },
}

FULL_PRESETS = {
    "mountain_car": {
        **DESK_PRESETS["mountain_car"],
        "dataset": {"seed": 1, "n_grid": [1000 * v for v in (1, 3, 6, 9, 12, 15, 18, 21, 24, 27, 30)],
                    "required_successes": 1, "horizon": 800},
        "trials": {"n": 90},
    },
    "pendulum": {
        **DESK_PRESETS["pendulum"],
        "fqi": {"mode": MODE_STATIONARY, "gamma": 0.95, "k": 300, "order": 4,
                "target_clip": True},
        "eval": {"n_rollouts": 1000, "max_steps": 3000, "seed": 77},
        "trials": {"n": 90},
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    env_name: str
    env_overrides: dict
    dataset_seed: int
    n_grid: tuple
    required_successes: int
    horizon: int
    mode: str
    fqi_k: int
    gamma: float
    order: int
    target_clip: bool
    optimizer: BfgsOptions
    eval_rollouts: int
    eval_max_steps: int
    eval_seed: int
    n_trials: int
    workers: int = 1
    extras: dict = field(default_factory=dict)

    @property
    def trial_seeds(self) -> list:
        return [self.dataset_seed + 1000 * t for t in range(self.n_trials)]

    def arm_config(self, loss: LossKind) -> FqiConfig:
        return FqiConfig(loss=loss, k=self.fqi_k, gamma=self.gamma,
                         optimizer=self.optimizer, target_clip=self.target_clip)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "env": {"name": self.env_name, **self.env_overrides},
            "dataset": {"seed": self.dataset_seed, "n_grid": list(self.n_grid),
                        "required_successes": self.required_successes,
                        "horizon": self.horizon},
            "fqi": {"mode": self.mode, "k": self.fqi_k, "gamma": self.gamma,
                    "order": self.order, "target_clip": self.target_clip},
            "optimizer": {"grad_tol": self.optimizer.grad_tol,
                          "max_iters": self.optimizer.max_iters,
                          "wolfe_c1": self.optimizer.wolfe_c1,
                          "wolfe_c2": self.optimizer.wolfe_c2,
                          "max_line_search_steps": self.optimizer.max_line_search_steps},
            "eval": {"n_rollouts": self.eval_rollouts, "max_steps": self.eval_max_steps,
                     "seed": self.eval_seed},
            "trials": {"n": self.n_trials, "seeds": self.trial_seeds},
            "run": {"workers": self.workers},
        }


def config_from_dict(raw: dict, preset: str = "desk") -> ExperimentConfig:
    env = raw.get("env", {})
    env_name = env.get("name")
    if env_name is None:
        raise ConfigError("config must set env.name")
    presets = DESK_PRESETS if preset == "desk" else FULL_PRESETS
    if preset not in ("desk", "full"):
        raise ConfigError("preset must be 'desk' or 'full'")
    if env_name not in presets:
        raise ConfigError(f"no preset for env {env_name!r}")
    merged = _merge(presets[env_name], raw)
    try:
        opt = merged.get("optimizer", {})
        optimizer = BfgsOptions(
            grad_tol=float(opt.get("grad_tol", 1e-5)),
            max_iters=int(opt.get("max_iters", 80)),
            wolfe_c1=float(opt.get("wolfe_c1", 1e-4)),
            wolfe_c2=float(opt.get("wolfe_c2", 0.9)),
            max_line_search_steps=int(opt.get("max_line_search_steps", 50)),
        )
        dataset = merged["dataset"]
        fqi = merged["fqi"]
        ev = merged["eval"]
        n_grid = dataset["n_grid"]
        if isinstance(n_grid, (int, float)):
            n_grid = [int(n_grid)]
        config = ExperimentConfig(
            name=str(merged.get("experiment", {}).get("name", f"{env_name}-{preset}")),
            env_name=env_name,
            env_overrides={k: v for k, v in merged["env"].items() if k != "name"},
            dataset_seed=int(dataset["seed"]),
            n_grid=tuple(int(n) for n in n_grid),
            required_successes=int(dataset["required_successes"]),
            horizon=int(dataset["horizon"]),
            mode=str(fqi["mode"]),
            fqi_k=int(fqi["k"]),
            gamma=float(fqi["gamma"]),
            order=int(fqi["order"]),
            target_clip=bool(fqi["target_clip"]),
            optimizer=optimizer,
            eval_rollouts=int(ev["n_rollouts"]),
            eval_max_steps=int(ev["max_steps"]),
            eval_seed=int(ev["seed"]),
            n_trials=int(merged["trials"]["n"]),
            workers=int(merged.get("run", {}).get("workers", 1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad experiment config: {exc}") from exc
    if config.mode not in (MODE_FINITE_HORIZON, MODE_STATIONARY):
        raise ConfigError(f"unknown fqi.mode {config.mode!r}")
    if config.mode == MODE_STATIONARY and not config.gamma < 1.0:
        raise ConfigError("stationary FQI needs gamma < 1")
    if config.required_successes > max(config.n_grid):
        raise ConfigError("required_successes exceeds the smallest usable dataset")
    return config


def load_config(path, preset: str = "desk") -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(parse_config_text(fh.read()), preset)


def _model_class(config: ExperimentConfig, env) -> SigmoidModelClass:
    basis = FourierBasis(config.order, env.feature_bounds())
    return SigmoidModelClass(basis, env.n_actions)


def train_arm(config: ExperimentConfig, dataset, loss: LossKind):
    env = make_env(config.env_name, **config.env_overrides)
    model_class = _model_class(config, env)
    arm = config.arm_config(loss)
    if config.mode == MODE_FINITE_HORIZON:
        return fqi_finite_horizon(dataset, config.horizon, model_class, arm)
    return fqi_stationary(dataset, model_class, arm)


def evaluate_run(config: ExperimentConfig, run, trial_index: int):
    env = make_env(config.env_name, **config.env_overrides)
    gamma = config.gamma if config.mode == MODE_STATIONARY else 1.0
    summary = evaluate_policy(env, run.greedy_policy(), config.eval_rollouts,
                              config.eval_seed + trial_index, config.eval_max_steps,
                              gamma=gamma)
    if config.mode == MODE_STATIONARY:
        return "balance_rate", summary.success_rate, summary.se_success
    return "mean_cost", summary.mean_cost, summary.se_cost


def run_trial(config: ExperimentConfig, trial_index: int):
    """All rows for one trial seed: collect once, slice prefixes, train both arms."""
    env = make_env(config.env_name, **config.env_overrides)
    seed = config.trial_seeds[trial_index]
    dataset = collect(env, max(config.n_grid), config.required_successes, seed,
                      config.horizon)
    rows = []
    for n in config.n_grid:
        subset = take_prefix(dataset, n)
        for loss in (LossKind.LOG, LossKind.SQUARED):
            started = time.perf_counter()
            status = "ok"
            metric_name, mean, se = "", "", ""
            try:
                run = train_arm(config, subset, loss)
                metric_name, mean, se = evaluate_run(config, run, trial_index)
            except Exception as exc:  # recorded per-row, run continues
                status = f"error:{type(exc).__name__}"
            rows.append({
                "schema": RESULTS_SCHEMA,
                "env": config.env_name,
                "loss": loss.value,
                "n_trajectories": n,
                "required_successes": config.required_successes,
                "trial_seed": seed,
                "metric_name": metric_name,
                "metric_mean": mean,
                "metric_se": se,
                "status": status,
                "wall_clock_s": time.perf_counter() - started,
            })
    return rows


def _format_row(row: dict) -> str:
    mean = row["metric_mean"]
    se = row["metric_se"]
    return ",".join([
        row["schema"], row["env"], row["loss"], str(row["n_trajectories"]),
        str(row["required_successes"]), str(row["trial_seed"]), row["metric_name"],
        repr(float(mean)) if mean != "" else "",
        repr(float(se)) if se != "" else "",
        row["status"],
    ])


def run_experiment(config: ExperimentConfig, out_dir):
    """Execute every (trial, n, arm) cell; write results.csv, timings.csv, and
    the run artifact.  Returns the list of row dicts."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_trial = list(pool.map(run_trial, [config] * config.n_trials,
                                      range(config.n_trials)))
    else:
        per_trial = [run_trial(config, t) for t in range(config.n_trials)]
    rows = [row for trial_rows in per_trial for row in trial_rows]

    results_path = os.path.join(out_dir, "results.csv")
    with open(results_path, "w") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for row in rows:
            fh.write(_format_row(row) + "\n")
    with open(os.path.join(out_dir, "timings.csv"), "w") as fh:
        fh.write("env,loss,n_trajectories,trial_seed,wall_clock_s\n")
        for row in rows:
            fh.write(f"{row['env']},{row['loss']},{row['n_trajectories']},"
                     f"{row['trial_seed']},{row['wall_clock_s']:.3f}\n")

    env = make_env(config.env_name, **config.env_overrides)
    arm_log = config.arm_config(LossKind.LOG).to_dict()
    arm_sq = config.arm_config(LossKind.SQUARED).to_dict()
    differing = sorted(k for k in arm_log if arm_log[k] != arm_sq[k])
    if differing != ["loss"]:
        raise RuntimeError(f"loss-switch isolation violated: arms differ in {differing}")
    artifact = {
        "version": __version__,
        "prng": PRNG_NAME,
        "config": config.to_dict(),
        "arms": {"log": arm_log, "squared": arm_sq},
        "loss_isolation_audit": {"differing_fields": differing},
        "environment": physics_dict(env),
        "results_csv": "results.csv",
    }
    artifact_path = os.path.join(out_dir, "artifact.json")
    with open(artifact_path, "w") as fh:
        json.dump(artifact, fh, indent=2, sort_keys=True)
    return rows


def read_results_csv(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != RESULTS_HEADER:
        raise ValueError(f"unrecognised results header in {path}")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        rows.append({
            "schema": cells[0], "env": cells[1], "loss": cells[2],
            "n_trajectories": int(cells[3]), "required_successes": int(cells[4]),
            "trial_seed": int(cells[5]), "metric_name": cells[6],
            "metric_mean": float(cells[7]) if cells[7] else math.nan,
            "metric_se": float(cells[8]) if cells[8] else math.nan,
            "status": cells[9],
        })
    return rows


def aggregate_rows(rows):
    """Group by (env, loss, n, required_successes): mean over trials and its SE."""
    groups: dict = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        key = (row["env"], row["loss"], row["n_trajectories"], row["required_successes"])
        groups.setdefault(key, {"values": [], "metric": row["metric_name"]})
        if groups[key]["metric"] != row["metric_name"]:
            raise ValueError(f"incompatible metric names within group {key}")
        groups[key]["values"].append(row["metric_mean"])
    out = []
    for key in sorted(groups):
        values = np.asarray(groups[key]["values"])
        se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
        out.append({
            "env": key[0], "loss": key[1], "n_trajectories": key[2],
            "required_successes": key[3], "n_trials": len(values),
            "metric_name": groups[key]["metric"],
            "mean": float(values.mean()), "se": se,
        })
    return out


def report(result_csv_paths, out_dir, plot: bool = True):
    """Aggregate result CSVs into per-environment learning-curve tables and a
    best-effort line plot."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for path in result_csv_paths:
        rows.extend(read_results_csv(path))
    aggregated = aggregate_rows(rows)
    paths = []
    for env_name in sorted({a["env"] for a in aggregated}):
        table = [a for a in aggregated if a["env"] == env_name]
        path = os.path.join(out_dir, f"curve_{env_name}.csv")
        with open(path, "w") as fh:
            fh.write("env,loss,n_trajectories,required_successes,n_trials,"
                     "metric_name,mean,se\n")
            for a in table:
                fh.write(f"{a['env']},{a['loss']},{a['n_trajectories']},"
                         f"{a['required_successes']},{a['n_trials']},{a['metric_name']},"
                         f"{a['mean']!r},{a['se']!r}\n")
        paths.append(path)
        if plot:
            _maybe_plot(table, os.path.join(out_dir, f"curve_{env_name}.png"))
    return aggregated, paths


def _maybe_plot(table, png_path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except Exception:
        return
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for loss in ("log", "squared"):
        pts = sorted((a["n_trajectories"], a["mean"], a["se"])
                     for a in table if a["loss"] == loss)
        if not pts:
            continue
        ns = [p[0] for p in pts]
        means = np.array([p[1] for p in pts])
        ses = np.array([p[2] for p in pts])
        ax.plot(ns, means, marker="o", label=f"FQI-{loss}")
        ax.fill_between(ns, means - ses, means + ses, alpha=0.25)
    ax.set_xlabel("trajectories in batch")
    ax.set_ylabel(table[0]["metric_name"] if table else "metric")
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
