"""Sparse-cost mountain car and noisy inverted pendulum, plus rollout machinery.

Both environments are value-like and step whole batches of episodes at once;
every random draw comes from a per-episode xoshiro256++ stream, so a
trajectory is a pure function of (environment, policy, master seed, episode
index) no matter how episodes are batched.

Per-episode draw order (documented for reproducibility):
  mountain car: no start draws; one action draw per step under the uniform
    behaviour policy (none when a model policy chooses actions).
  pendulum: two start draws (angle, angular velocity), then per step one
    action draw under the uniform behaviour policy followed by one noise draw.

Step indices are 0-based throughout: step h of the paper's math is index h-1
here, and a discounted cost sum is sum_t gamma^t * cost_t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .features import BoxBounds
from .rng import XoshiroBatch

UNIFORM_POLICY = "uniform"


@dataclass(frozen=True)
class MountainCarParams:
    force: float = 0.001
    gravity: float = 0.0025
    min_position: float = -1.2
    max_position: float = 0.6
    min_velocity: float = -0.07
    max_velocity: float = 0.07
    goal_position: float = 0.5
    start_position: float = -0.5
    start_velocity: float = 0.0


@dataclass(frozen=True)
class PendulumParams:
    gravity: float = 9.8
    pendulum_mass: float = 2.0
    cart_mass: float = 8.0
    length: float = 0.5
    dt: float = 0.1
    force: float = 50.0
    noise_halfwidth: float = 10.0
    max_velocity: float = 5.0
    fall_angle: float = math.pi / 2.0
    start_halfwidth: float = 0.05


class MountainCar:
    """Car on a hill, 3 actions, fixed-horizon episodes, terminal-only cost.

    The goal region is absorbing: once position >= goal the dynamics freeze,
    so the done flag is exactly position >= goal.  Episodes run the full
    horizon; a cost of 1 lands on the final step iff the goal was never
    reached.
    """

    name = "mountain_car"
    state_dim = 2
    n_actions = 3
    stops_on_terminal = False

    def __init__(self, params: MountainCarParams = MountainCarParams()):
        self.params = params

    def feature_bounds(self) -> BoxBounds:
        p = self.params
        return BoxBounds(
            lo=np.array([p.min_position, p.min_velocity]),
            hi=np.array([p.max_position, p.max_velocity]),
        )

    def initial_states(self, n: int, rng: XoshiroBatch | None) -> np.ndarray:
        p = self.params
        return np.tile(np.array([p.start_position, p.start_velocity]), (n, 1))

    def terminal_mask(self, states: np.ndarray) -> np.ndarray:
        return states[:, 0] >= self.params.goal_position

    def step_batch(self, states: np.ndarray, actions: np.ndarray,
                   rng: XoshiroBatch | None) -> np.ndarray:
        p = self.params
        pos, vel = states[:, 0], states[:, 1]
        frozen = self.terminal_mask(states)
        vel_new = np.clip(
            vel + p.force * (actions - 1) - p.gravity * np.cos(3.0 * pos),
            p.min_velocity, p.max_velocity,
        )
        pos_new = np.clip(pos + vel_new, p.min_position, p.max_position)
        vel_new = np.where(pos_new <= p.min_position, 0.0, vel_new)
        out = np.stack([pos_new, vel_new], axis=1)
        out[frozen] = states[frozen]
        return out

    def step_costs(self, states, actions, next_states, step: int, max_steps: int) -> np.ndarray:
        if step < max_steps - 1:
            return np.zeros(states.shape[0])
        return np.where(self.terminal_mask(next_states), 0.0, 1.0)

    def row_terminal(self, states, next_states, step: int, max_steps: int) -> np.ndarray:
        # The finite-horizon episode ends at the last step regardless of state.
        full = step == max_steps - 1
        return np.full(states.shape[0], full, dtype=bool)

    def success_mask(self, final_states, steps_taken, max_steps) -> np.ndarray:
        return self.terminal_mask(final_states)


class InvertedPendulum:
    """Pendulum on a cart with noisy force, frozen once it falls past horizontal.

    Cost 1 is incurred on the transition into the fallen region and never
    again, so any trajectory's discounted cost sum is gamma^(fall step) <= 1.
    """

    name = "pendulum"
    state_dim = 2
    n_actions = 3
    stops_on_terminal = True

    def __init__(self, params: PendulumParams = PendulumParams()):
        self.params = params

    def feature_bounds(self) -> BoxBounds:
        p = self.params
        return BoxBounds(
            lo=np.array([-p.fall_angle, -p.max_velocity]),
            hi=np.array([p.fall_angle, p.max_velocity]),
        )

    def initial_states(self, n: int, rng: XoshiroBatch) -> np.ndarray:
        w = self.params.start_halfwidth
        angle = rng.uniform(-w, w)
        velocity = rng.uniform(-w, w)
        return np.stack([angle, velocity], axis=1)

    def terminal_mask(self, states: np.ndarray) -> np.ndarray:
        return np.abs(states[:, 0]) > self.params.fall_angle

    def step_batch(self, states: np.ndarray, actions: np.ndarray,
                   rng: XoshiroBatch) -> np.ndarray:
        p = self.params
        noise = rng.uniform(-p.noise_halfwidth, p.noise_halfwidth)
        return self.step_with_noise(states, actions, noise)

    def step_with_noise(self, states, actions, noise) -> np.ndarray:
        p = self.params
        angle, vel = states[:, 0], states[:, 1]
        frozen = self.terminal_mask(states)
        u = p.force * (np.asarray(actions) - 1.0) + noise
        alpha = 1.0 / (p.pendulum_mass + p.cart_mass)
        ml = p.pendulum_mass * p.length
        num = (
            p.gravity * np.sin(angle)
            - 0.5 * alpha * ml * vel ** 2 * np.sin(2.0 * angle)
            - alpha * np.cos(angle) * u
        )
        den = 4.0 * p.length / 3.0 - alpha * ml * np.cos(angle) ** 2
        acc = num / den
        angle_new = angle + p.dt * vel
        vel_new = np.clip(vel + p.dt * acc, -p.max_velocity, p.max_velocity)
        out = np.stack([angle_new, vel_new], axis=1)
        out[frozen] = states[frozen]
        return out

    def step_costs(self, states, actions, next_states, step: int, max_steps: int) -> np.ndarray:
        fell = self.terminal_mask(next_states) & ~self.terminal_mask(states)
        return np.where(fell, 1.0, 0.0)

    def row_terminal(self, states, next_states, step: int, max_steps: int) -> np.ndarray:
        # Falling ends the episode; running out the recording horizon does not
        # end the MDP episode, so such rows may still bootstrap.
        return self.terminal_mask(next_states) & ~self.terminal_mask(states)

    def success_mask(self, final_states, steps_taken, max_steps) -> np.ndarray:
        return (~self.terminal_mask(final_states)) & (steps_taken >= max_steps)


def make_env(name: str, **overrides):
    """Environment by name string, physics constants overridable by keyword."""
    if name == MountainCar.name:
        return MountainCar(MountainCarParams(**overrides))
    if name == InvertedPendulum.name:
        return InvertedPendulum(PendulumParams(**overrides))
    raise ValueError(f"unknown environment {name!r}")


def physics_dict(env) -> dict:
    return {"name": env.name, **asdict(env.params)}


@dataclass
class Trajectory:
    """One episode: parallel arrays over steps, 0-based step indices."""

    states: np.ndarray       # (T, d)
    actions: np.ndarray      # (T,)
    costs: np.ndarray        # (T,)
    next_states: np.ndarray  # (T, d)
    steps: np.ndarray        # (T,)
    terminal: np.ndarray     # (T,) bool
    success: bool

    def __len__(self) -> int:
        return self.states.shape[0]

    def discounted_cost(self, gamma: float) -> float:
        return float(np.sum(self.costs * gamma ** self.steps.astype(np.float64)))


def batch_rollouts(env, policy, master_seed: int, episode_indices, max_steps: int):
    """Roll out one episode per index; returns a list of Trajectory.

    ``policy`` is either UNIFORM_POLICY (actions drawn from the episode
    streams) or a callable (states_batch, step) -> actions_batch.  Model
    policies are only queried on episodes that are still running, so they
    never see out-of-bounds frozen states.
    """
    episode_indices = np.asarray(episode_indices, dtype=np.int64)
    n = episode_indices.shape[0]
    rng = XoshiroBatch.for_episodes(master_seed, episode_indices)
    states = env.initial_states(n, rng)
    uniform = isinstance(policy, str)
    if uniform and policy != UNIFORM_POLICY:
        raise ValueError(f"unknown behaviour policy {policy!r}")

    state_rec, action_rec, cost_rec, next_rec, term_rec = [], [], [], [], []
    active = np.ones(n, dtype=bool)
    length = np.zeros(n, dtype=np.int64)
    for step in range(max_steps):
        if uniform:
            actions = rng.randint(env.n_actions)
        else:
            actions = np.zeros(n, dtype=np.int64)
            if active.any():
                actions[active] = np.asarray(policy(states[active], step), dtype=np.int64)
        next_states = env.step_batch(states, actions, rng)
        costs = env.step_costs(states, actions, next_states, step, max_steps)
        terminal = env.row_terminal(states, next_states, step, max_steps)
        state_rec.append(states)
        action_rec.append(actions)
        cost_rec.append(costs)
        next_rec.append(next_states)
        term_rec.append(terminal)
        length[active] = step + 1
        states = next_states
        if env.stops_on_terminal:
            active &= ~env.terminal_mask(next_states)
            if not active.any():
                break

    all_states = np.stack(state_rec)        # (T, n, d)
    all_actions = np.stack(action_rec)
    all_costs = np.stack(cost_rec)
    all_next = np.stack(next_rec)
    all_term = np.stack(term_rec)
    success = env.success_mask(states, length, max_steps)

    out = []
    steps_arr = np.arange(all_states.shape[0], dtype=np.int64)
    for i in range(n):
        t = length[i]
        out.append(Trajectory(
            states=all_states[:t, i].copy(),
            actions=all_actions[:t, i].copy(),
            costs=all_costs[:t, i].copy(),
            next_states=all_next[:t, i].copy(),
            steps=steps_arr[:t].copy(),
            terminal=all_term[:t, i].copy(),
            success=bool(success[i]),
        ))
    return out


def rollout(env, policy, seed: int, max_steps: int) -> Trajectory:
    """Single-episode rollout; equals episode 0 of a batch under this seed."""
    return batch_rollouts(env, policy, seed, [0], max_steps)[0]


def scan_successes(env, policy, master_seed: int, episode_indices, max_steps: int) -> np.ndarray:
    """Success flags only, no trajectory recording.

    Consumes the per-episode streams exactly like batch_rollouts, so an
    episode found successful here yields the identical trajectory when
    re-simulated with recording.
    """
    episode_indices = np.asarray(episode_indices, dtype=np.int64)
    n = episode_indices.shape[0]
    rng = XoshiroBatch.for_episodes(master_seed, episode_indices)
    states = env.initial_states(n, rng)
    uniform = isinstance(policy, str)
    if uniform and policy != UNIFORM_POLICY:
        raise ValueError(f"unknown behaviour policy {policy!r}")
    active = np.ones(n, dtype=bool)
    length = np.zeros(n, dtype=np.int64)
    for step in range(max_steps):
        if uniform:
            actions = rng.randint(env.n_actions)
        else:
            actions = np.zeros(n, dtype=np.int64)
            if active.any():
                actions[active] = np.asarray(policy(states[active], step), dtype=np.int64)
        states = env.step_batch(states, actions, rng)
        length[active] = step + 1
        if env.stops_on_terminal:
            active &= ~env.terminal_mask(states)
            if not active.any():
                break
    return env.success_mask(states, length, max_steps)


@dataclass(frozen=True)
class EvalSummary:
    mean_cost: float
    se_cost: float
    success_rate: float
    se_success: float
    n_rollouts: int


def evaluate_policy(env, policy, n_rollouts: int, seed: int, max_steps: int,
                    gamma: float = 1.0) -> EvalSummary:
    """Mean discounted cost and success rate of a policy over seeded rollouts."""
    trajectories = batch_rollouts(env, policy, seed, np.arange(n_rollouts), max_steps)
    costs = np.array([t.discounted_cost(gamma) for t in trajectories])
    wins = np.array([t.success for t in trajectories], dtype=np.float64)

    def se(x):
        if x.size < 2:
            return 0.0
        return float(x.std(ddof=1) / math.sqrt(x.size))

    return EvalSummary(
        mean_cost=float(costs.mean()),
        se_cost=se(costs),
        success_rate=float(wins.mean()),
        se_success=se(wins),
        n_rollouts=n_rollouts,
    )
