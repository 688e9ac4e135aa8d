"""Batch dataset collection, deterministic subsetting, and text persistence.

A dataset is columnar (one array per transition field) with per-episode
ranges.  Collection can condition on trajectory outcome: drawing continues
until the dataset holds exactly the requested number of successful episodes,
which are then placed first so prefix subsets retain them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import UNIFORM_POLICY, batch_rollouts, physics_dict, scan_successes
from .rng import PRNG_NAME

FORMAT_VERSION = 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def _physics_hash(env) -> str:
    text = ",".join(f"{k}={v!r}" for k, v in sorted(physics_dict(env).items()))
    return f"{fnv1a64(text.encode()):016x}"


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    cost: float
    next_state: np.ndarray
    step_index: int
    terminal: bool
    episode_id: int


class Dataset:
    """Flat transition arrays plus episode provenance and a manifest."""

    def __init__(self, states, actions, costs, next_states, step_index, terminal,
                 episode_id, episode_success, manifest: dict):
        self.states = np.asarray(states, dtype=np.float64)
        self.actions = np.asarray(actions, dtype=np.int64)
        self.costs = np.asarray(costs, dtype=np.float64)
        self.next_states = np.asarray(next_states, dtype=np.float64)
        self.step_index = np.asarray(step_index, dtype=np.int64)
        self.terminal = np.asarray(terminal, dtype=bool)
        self.episode_id = np.asarray(episode_id, dtype=np.int64)
        self.episode_success = np.asarray(episode_success, dtype=bool)
        self.manifest = dict(manifest)
        if np.any(self.costs < 0.0) or np.any(self.costs > 1.0):
            raise ValueError("costs must lie in [0, 1]")
        horizon = int(self.manifest.get("horizon", 0))
        if horizon and np.any(self.step_index >= horizon):
            raise ValueError("step_index must be < horizon")
        # Episode ids must be a contiguous 0..E-1 run-length encoding.
        boundaries = np.flatnonzero(np.diff(self.episode_id) != 0) + 1
        self._offsets = np.concatenate([[0], boundaries, [len(self.episode_id)]])
        ids = self.episode_id[self._offsets[:-1]]
        if len(ids) and (ids[0] != 0 or np.any(np.diff(ids) != 1)):
            raise ValueError("episode ids must be contiguous starting at 0")
        if len(ids) != len(self.episode_success):
            raise ValueError("episode_success length mismatch")

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def n_episodes(self) -> int:
        return len(self.episode_success)

    @property
    def n_successful(self) -> int:
        return int(self.episode_success.sum())

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    def episode_slice(self, e: int) -> slice:
        return slice(int(self._offsets[e]), int(self._offsets[e + 1]))

    def transition(self, i: int) -> Transition:
        return Transition(
            state=self.states[i],
            action=int(self.actions[i]),
            cost=float(self.costs[i]),
            next_state=self.next_states[i],
            step_index=int(self.step_index[i]),
            terminal=bool(self.terminal[i]),
            episode_id=int(self.episode_id[i]),
        )


def _from_trajectories(trajectories, successes, manifest) -> Dataset:
    states = np.concatenate([t.states for t in trajectories])
    next_states = np.concatenate([t.next_states for t in trajectories])
    actions = np.concatenate([t.actions for t in trajectories])
    costs = np.concatenate([t.costs for t in trajectories])
    steps = np.concatenate([t.steps for t in trajectories])
    terminal = np.concatenate([t.terminal for t in trajectories])
    episode_id = np.concatenate([
        np.full(len(t), e, dtype=np.int64) for e, t in enumerate(trajectories)
    ])
    return Dataset(states, actions, costs, next_states, steps, terminal,
                   episode_id, successes, manifest)


class CollectionBudgetError(RuntimeError):
    def __init__(self, message, n_drawn, n_successes):
        super().__init__(message)
        self.n_drawn = n_drawn
        self.n_successes = n_successes


def collect(env, n_trajectories: int, required_successes: int, seed: int,
            horizon: int, behavior=UNIFORM_POLICY,
            draw_budget: int = 10_000_000, chunk_size: int = 512) -> Dataset:
    """Collect episodes under the behaviour policy, conditioning on outcome.

    With required_successes >= 1, episodes are drawn (by increasing episode
    index under the master seed) until exactly that many successes and
    n - required failures exist; surplus outcomes are skipped, which realises
    the draw-until-exact-count semantics.  required_successes == 0 means plain
    unconditioned collection of the first n episodes.  Successful episodes are
    always moved to the front.  Raises CollectionBudgetError if the draw
    budget is exhausted first.
    """
    if required_successes > n_trajectories:
        raise ValueError("required_successes cannot exceed n_trajectories")
    exact = required_successes >= 1
    wins, losses = [], []
    next_index = 0
    while True:
        if not exact and next_index >= n_trajectories:
            break
        if exact and len(wins) >= required_successes and \
                len(losses) >= n_trajectories - required_successes:
            break
        if next_index >= draw_budget:
            raise CollectionBudgetError(
                f"draw budget {draw_budget} exhausted with "
                f"{len(wins)} successes of {required_successes} required",
                n_drawn=next_index, n_successes=len(wins),
            )
        take = chunk_size if exact else min(chunk_size, n_trajectories - next_index)
        take = min(take, draw_budget - next_index)
        batch = batch_rollouts(env, behavior, seed, np.arange(next_index, next_index + take),
                               horizon)
        next_index += take
        for t in batch:
            (wins if t.success else losses).append(t)

    if exact:
        kept = wins[:required_successes] + losses[:n_trajectories - required_successes]
    else:
        kept = wins + losses  # front-load whatever successes occurred
    successes = np.array([t.success for t in kept], dtype=bool)
    manifest = {
        "env": env.name,
        "physics_hash": _physics_hash(env),
        "policy": behavior if isinstance(behavior, str) else "custom",
        "seed": int(seed),
        "n_trajectories": len(kept),
        "n_successful": int(successes.sum()),
        "horizon": int(horizon),
        "prng": PRNG_NAME,
        "state_dim": env.state_dim,
    }
    return _from_trajectories(kept, successes, manifest)


def take_prefix(dataset: Dataset, n_trajectories: int) -> Dataset:
    """First n episodes (successes stay front-loaded); manifest updated."""
    if n_trajectories > dataset.n_episodes:
        raise ValueError("prefix larger than dataset")
    end = int(dataset._offsets[n_trajectories])
    manifest = dict(dataset.manifest)
    manifest["n_trajectories"] = n_trajectories
    manifest["n_successful"] = int(dataset.episode_success[:n_trajectories].sum())
    return Dataset(
        dataset.states[:end], dataset.actions[:end], dataset.costs[:end],
        dataset.next_states[:end], dataset.step_index[:end], dataset.terminal[:end],
        dataset.episode_id[:end], dataset.episode_success[:n_trajectories], manifest,
    )


_MANIFEST_KEYS = ("env", "physics_hash", "policy", "seed", "n_trajectories",
                  "n_successful", "horizon", "prng", "state_dim")


def _render_body(dataset: Dataset) -> str:
    rows = []
    for i in range(len(dataset)):
        cells = [
            str(dataset.episode_id[i]),
            str(dataset.step_index[i]),
            "1" if dataset.terminal[i] else "0",
            str(dataset.actions[i]),
            repr(float(dataset.costs[i])),
        ]
        cells.extend(repr(float(x)) for x in dataset.states[i])
        cells.extend(repr(float(x)) for x in dataset.next_states[i])
        rows.append(",".join(cells))
    rows.append("")
    return "\n".join(rows)


def save(dataset: Dataset, path) -> None:
    """Write manifest header plus one text row per transition (round-trip exact)."""
    body = _render_body(dataset)
    checksum = fnv1a64(body.encode())
    lines = [f"format_version={FORMAT_VERSION}", f"checksum={checksum:016x}"]
    for key in _MANIFEST_KEYS:
        lines.append(f"{key}={dataset.manifest[key]}")
    lines.append(f"n_transitions={len(dataset)}")
    lines.append("---")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
        fh.write(body)


class DatasetFormatError(ValueError):
    pass


def load(path, expected_env: str | None = None) -> Dataset:
    """Read a dataset file, verifying version, checksum, and (optionally) env name."""
    with open(path, "r") as fh:
        text = fh.read()
    sep = text.find("---\n")
    if sep < 0:
        raise DatasetFormatError("missing header separator")
    header, body = text[:sep], text[sep + 4:]
    meta = {}
    for line in header.splitlines():
        if not line:
            continue
        key, _, value = line.partition("=")
        if not _:
            raise DatasetFormatError(f"malformed header line {line!r}")
        meta[key] = value
    if int(meta.get("format_version", -1)) != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported format_version {meta.get('format_version')}")
    if f"{fnv1a64(body.encode()):016x}" != meta["checksum"]:
        raise DatasetFormatError("checksum mismatch: file is corrupt")
    if expected_env is not None and meta["env"] != expected_env:
        raise DatasetFormatError(
            f"dataset is for env {meta['env']!r}, trainer expects {expected_env!r}")

    d = int(meta["state_dim"])
    n = int(meta["n_transitions"])
    lines = body.splitlines()
    if len(lines) != n:
        raise DatasetFormatError(f"expected {n} rows, found {len(lines)}")
    episode_id = np.empty(n, dtype=np.int64)
    step_index = np.empty(n, dtype=np.int64)
    terminal = np.empty(n, dtype=bool)
    actions = np.empty(n, dtype=np.int64)
    costs = np.empty(n)
    states = np.empty((n, d))
    next_states = np.empty((n, d))
    for i, line in enumerate(lines):
        cells = line.split(",")
        if len(cells) != 5 + 2 * d:
            raise DatasetFormatError(f"malformed row {i}")
        episode_id[i] = int(cells[0])
        step_index[i] = int(cells[1])
        terminal[i] = cells[2] == "1"
        actions[i] = int(cells[3])
        costs[i] = float(cells[4])
        states[i] = [float(x) for x in cells[5:5 + d]]
        next_states[i] = [float(x) for x in cells[5 + d:5 + 2 * d]]

    n_episodes = int(meta["n_trajectories"])
    n_successful = int(meta["n_successful"])
    episode_success = np.arange(n_episodes) < n_successful  # successes are front-loaded
    manifest = {k: meta[k] for k in _MANIFEST_KEYS}
    for key in ("seed", "n_trajectories", "n_successful", "horizon", "state_dim"):
        manifest[key] = int(manifest[key])
    return Dataset(states, actions, costs, next_states, step_index, terminal,
                   episode_id, episode_success, manifest)
