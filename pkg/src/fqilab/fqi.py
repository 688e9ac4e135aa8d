"""Fitted Q-iteration drivers with a switchable training loss.

Two training loops: the discounted stationary loop (one model refined over k
rounds) and the finite-horizon backward loop (one model per step, gamma
treated as 1).  Model classes are either tabular (closed-form per-cell fits,
where both losses share the empirical-mean minimiser) or sigmoid-linear over
Fourier features (fit by BFGS).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .bfgs import BfgsOptions, bfgs_minimize
from .features import FourierBasis, SigmoidLinearModel, TabularQModel, make_objective, tabular_fit
from .losses import LossKind

INIT_ZEROS = "zeros"
INIT_SEEDED = "seeded"


@dataclass(frozen=True)
class FqiConfig:
    loss: LossKind
    k: int = 1                      # iterations; the finite-horizon loop uses H instead
    gamma: float = 0.95
    optimizer: BfgsOptions = field(default_factory=BfgsOptions)
    init: str = INIT_ZEROS          # "zeros": f_0 is the zero function
    init_seed: int | None = None    # used when init == "seeded"
    target_clip: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.init not in (INIT_ZEROS, INIT_SEEDED):
            raise ValueError("init must be 'zeros' or 'seeded'")
        if self.init == INIT_SEEDED and self.init_seed is None:
            raise ValueError("seeded init requires init_seed")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.value
        return d


class SigmoidModelClass:
    """Sigmoid-linear models over a shared Fourier basis."""

    kind = "sigmoid"

    def __init__(self, basis: FourierBasis, n_actions: int):
        self.basis = basis
        self.n_actions = n_actions
        self.template = SigmoidLinearModel(basis, n_actions)

    def initial_params(self, config: FqiConfig) -> np.ndarray:
        if config.init == INIT_SEEDED:
            rng = np.random.default_rng(config.init_seed)
            return rng.normal(0.0, 0.1, self.template.n_params)
        return np.zeros(self.template.n_params)


class TabularModelClass:
    """Unrestricted per-cell models on a finite state-action grid."""

    kind = "tabular"

    def __init__(self, n_states: int, n_actions: int):
        self.n_states = n_states
        self.n_actions = n_actions

    def initial_values(self, config: FqiConfig) -> np.ndarray:
        if config.init == INIT_SEEDED:
            rng = np.random.default_rng(config.init_seed)
            return rng.uniform(0.0, 1.0, (self.n_states, self.n_actions))
        return np.zeros((self.n_states, self.n_actions))


@dataclass
class OptReport:
    termination: str
    iters: int
    grad_norm: float


@dataclass
class FqiRun:
    mode: str                      # "stationary" | "finite_horizon"
    config: FqiConfig
    model_class: object
    params: list                   # per iteration (stationary) or per step (finite horizon)
    losses: list
    reports: list

    def model_at(self, index: int):
        p = self.params[index]
        if self.model_class.kind == "sigmoid":
            return self.model_class.template.with_params(p)
        return TabularQModel(p)

    def final_model(self):
        return self.model_at(len(self.params) - 1)

    def greedy_policy(self):
        """Batch policy (states, step) -> actions.

        Stationary runs ignore the step; finite-horizon runs select the model
        trained for that step (0-based).
        """
        if self.mode == "stationary":
            model = self.final_model()
            return lambda states, step: model.predict_all(states).argmin(axis=1)
        models = [self.model_at(h) for h in range(len(self.params))]

        def policy(states, step):
            return models[step].predict_all(states).argmin(axis=1)

        return policy


def compute_targets(costs, terminal, next_min_values, gamma: float, clip: bool = True):
    """Regression targets cost + gamma * min_a f_prev(s', a), zeroed on terminals.

    ``next_min_values`` may be None to denote the zero bootstrap function.
    """
    costs = np.asarray(costs, dtype=np.float64)
    if np.any(costs < 0.0) or np.any(costs > 1.0):
        raise ValueError("costs must lie in [0, 1]")
    terminal = np.asarray(terminal, dtype=bool)
    targets = costs.copy()
    if next_min_values is not None and gamma != 0.0:
        targets = targets + gamma * np.where(terminal, 0.0, np.asarray(next_min_values))
    if clip:
        targets = np.clip(targets, 0.0, 1.0)
    return targets


def compute_targets_dataset(dataset, f_prev, gamma: float, clip: bool = True):
    """Spec-level convenience: targets for a whole dataset given the previous model."""
    if f_prev is None:
        return compute_targets(dataset.costs, dataset.terminal, None, gamma, clip)
    mins = np.zeros(len(dataset))
    live = ~dataset.terminal
    if live.any():
        mins[live] = _min_values(f_prev, dataset.next_states[live])
    return compute_targets(dataset.costs, dataset.terminal, mins, gamma, clip)


def _min_values(model, states):
    if isinstance(model, TabularQModel):
        return model.min_values(states[:, 0].astype(np.int64))
    return model.min_values(states)


def greedy_action(model, state) -> int:
    """Index of the smallest predicted value, lowest index on ties."""
    if isinstance(model, TabularQModel):
        values = model.values[int(np.asarray(state).reshape(-1)[0])]
    else:
        values = model.predict_all(np.asarray(state, dtype=np.float64)[None, :])[0]
    return int(values.argmin())


def _fit_sigmoid(model_class, feats, actions, targets, loss, warm, opts):
    objective = make_objective(model_class.template, feats, actions, targets, loss)
    result = bfgs_minimize(objective, warm, opts)
    report = OptReport(result.termination.value, result.iters, result.grad_norm)
    return result.x_star, result.f_star, report


def fqi_stationary(dataset, model_class, config: FqiConfig) -> FqiRun:
    """Algorithm: k rounds of target computation and loss minimisation.

    Each round is warm-started from the previous round's parameters.  On
    tabular classes the regression is the closed-form per-cell mean, so the
    loss choice cannot change the iterates.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if config.gamma >= 1.0:
        raise ValueError("the stationary loop needs gamma < 1")
    tabular = model_class.kind == "tabular"
    run = FqiRun("stationary", config, model_class, [], [], [])

    if tabular:
        states_idx = dataset.states[:, 0].astype(np.int64)
        next_idx = dataset.next_states[:, 0].astype(np.int64)
        if config.init == INIT_ZEROS:
            f_prev_values = None
        else:
            f_prev_values = model_class.initial_values(config)
        for _ in range(config.k):
            if f_prev_values is None:
                mins = None
            else:
                mins = f_prev_values[next_idx].min(axis=1)
            targets = compute_targets(dataset.costs, dataset.terminal, mins,
                                      config.gamma, config.target_clip)
            model = tabular_fit(model_class.n_states, model_class.n_actions,
                                states_idx, dataset.actions, targets, config.loss)
            f_prev_values = model.values
            run.params.append(model.values)
            run.losses.append(float(np.mean((model.values[states_idx, dataset.actions]
                                             - targets) ** 2)))
            run.reports.append(None)
        return run

    basis = model_class.basis
    feats = basis.features(dataset.states)
    live = ~dataset.terminal
    next_feats = basis.features(dataset.next_states[live]) if live.any() else None
    theta = model_class.initial_params(config)
    if config.init == INIT_ZEROS:
        f_prev = None
    else:
        f_prev = model_class.template.with_params(theta)
    for _ in range(config.k):
        mins = np.zeros(len(dataset))
        if f_prev is not None and next_feats is not None:
            preds = f_prev.predict_all_from_features(next_feats)
            mins[live] = preds.min(axis=1)
        targets = compute_targets(dataset.costs, dataset.terminal,
                                  None if f_prev is None else mins,
                                  config.gamma, config.target_clip)
        theta, loss_value, report = _fit_sigmoid(model_class, feats, dataset.actions,
                                                 targets, config.loss, theta,
                                                 config.optimizer)
        run.params.append(theta)
        run.losses.append(loss_value)
        run.reports.append(report)
        f_prev = model_class.template.with_params(theta)
    return run


def fqi_finite_horizon(dataset, horizon: int, model_class, config: FqiConfig) -> FqiRun:
    """Backward induction over steps: one regression per step, gamma = 1.

    Targets at step h bootstrap through the step h+1 model; the model beyond
    the horizon is the zero function.  Each step's fit warm-starts from the
    next step's parameters.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if np.any(dataset.step_index >= horizon):
        raise ValueError("dataset contains step indices beyond the horizon")
    tabular = model_class.kind == "tabular"
    run = FqiRun("finite_horizon", config, model_class, [None] * horizon,
                 [None] * horizon, [None] * horizon)

    by_step = [np.flatnonzero(dataset.step_index == h) for h in range(horizon)]
    later_model = None  # model for step h+1; None means the zero function
    if not tabular:
        basis = model_class.basis
        theta = model_class.initial_params(config)
    for h in range(horizon - 1, -1, -1):
        idx = by_step[h]
        if idx.size == 0:
            raise ValueError(f"no transitions recorded at step {h}")
        costs = dataset.costs[idx]
        terminal = dataset.terminal[idx]
        if later_model is None:
            mins = None
        else:
            mins = np.zeros(idx.size)
            live = ~terminal
            if live.any():
                mins[live] = _min_values(later_model, dataset.next_states[idx[live]])
        targets = compute_targets(costs, terminal, mins, 1.0, config.target_clip)
        if tabular:
            model = tabular_fit(model_class.n_states, model_class.n_actions,
                                dataset.states[idx, 0].astype(np.int64),
                                dataset.actions[idx], targets, config.loss)
            run.params[h] = model.values
            run.losses[h] = 0.0
            run.reports[h] = None
            later_model = model
        else:
            feats = basis.features(dataset.states[idx])
            theta, loss_value, report = _fit_sigmoid(model_class, feats,
                                                     dataset.actions[idx], targets,
                                                     config.loss, theta,
                                                     config.optimizer)
            run.params[h] = theta
            run.losses[h] = loss_value
            run.reports[h] = report
            later_model = model_class.template.with_params(theta)
    return run
