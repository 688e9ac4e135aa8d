"""Fourier features on a box, sigmoid-linear Q-models, and batch objectives.

A model maps (state, action) into [0, 1].  The sigmoid-linear model keeps one
weight block per action over a shared feature vector; its parameters live in a
single flat array so the optimiser sees an unstructured vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import LOG_EPS, LossKind

_BOUNDS_SLACK = 1e-9


@dataclass(frozen=True)
class BoxBounds:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo/hi must be 1-d arrays of equal length")
        if np.any(lo >= hi):
            raise ValueError("need lo < hi componentwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]


class FourierBasis:
    """All multi-indices in {0..order-1}^dim; feature_j = cos(pi <c_j, x_norm>).

    An order-m basis on a d-dimensional box yields m^d features, the first of
    which is the constant 1 (all-zero multi-index).
    """

    def __init__(self, order: int, bounds: BoxBounds):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        self.bounds = bounds
        d = bounds.dim
        self.coefficients = np.indices((order,) * d).reshape(d, -1).T.astype(np.float64)
        self.n_features = self.coefficients.shape[0]

    def features(self, states) -> np.ndarray:
        """Feature matrix for a batch of states (or a single state vector)."""
        x = np.asarray(states, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.bounds.dim:
            raise ValueError("state dimension mismatch")
        lo, hi = self.bounds.lo, self.bounds.hi
        if np.any(x < lo - _BOUNDS_SLACK) or np.any(x > hi + _BOUNDS_SLACK):
            raise ValueError("state outside feature bounds")
        xn = (np.clip(x, lo, hi) - lo) / (hi - lo)
        phi = np.cos(np.pi * (xn @ self.coefficients.T))
        return phi[0] if single else phi


def fourier_features(basis: FourierBasis, state) -> np.ndarray:
    return basis.features(state)


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class SigmoidLinearModel:
    """f(s, a) = sigmoid(<phi(s), theta_a>) with a flat parameter vector.

    Parameters are stored action-block by action-block: theta[a*F:(a+1)*F].
    Instances are immutable; use with_params to rebind.
    """

    def __init__(self, basis: FourierBasis, n_actions: int, params=None):
        self.basis = basis
        self.n_actions = n_actions
        self.n_params = n_actions * basis.n_features
        if params is None:
            params = np.zeros(self.n_params)
        params = np.asarray(params, dtype=np.float64).copy()
        if params.shape != (self.n_params,):
            raise ValueError("params must be a flat vector of length n_actions * n_features")
        params.setflags(write=False)
        self.params = params

    def with_params(self, params) -> "SigmoidLinearModel":
        return SigmoidLinearModel(self.basis, self.n_actions, params)

    @property
    def theta(self) -> np.ndarray:
        """Parameters reshaped to (n_actions, n_features)."""
        return self.params.reshape(self.n_actions, self.basis.n_features)

    def predict(self, state, action: int) -> float:
        if not 0 <= action < self.n_actions:
            raise ValueError("bad action index")
        phi = self.basis.features(state)
        return float(_sigmoid(phi @ self.theta[action]))

    def predict_all(self, states) -> np.ndarray:
        """(N, n_actions) predictions for a batch of states."""
        phi = np.atleast_2d(self.basis.features(states))
        return self.predict_all_from_features(phi)

    def predict_all_from_features(self, features) -> np.ndarray:
        """(N, n_actions) predictions from a precomputed feature matrix."""
        return _sigmoid(np.atleast_2d(features) @ self.theta.T)

    def min_values(self, states) -> np.ndarray:
        """min over actions of f(s, .), per state in the batch."""
        return self.predict_all(states).min(axis=1)

    def gradient(self, state, action: int) -> np.ndarray:
        """d predict / d params: p(1-p) phi in the action block, zero elsewhere."""
        if not 0 <= action < self.n_actions:
            raise ValueError("bad action index")
        phi = self.basis.features(state)
        p = float(_sigmoid(phi @ self.theta[action]))
        grad = np.zeros(self.n_params)
        nf = self.basis.n_features
        grad[action * nf:(action + 1) * nf] = p * (1.0 - p) * phi
        return grad


class TabularQModel:
    """Q-model backed by an (S, A) table with values in [0, 1]."""

    def __init__(self, values):
        values = np.asarray(values, dtype=np.float64).copy()
        if values.ndim != 2:
            raise ValueError("values must be (S, A)")
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ValueError("tabular values must lie in [0, 1]")
        values.setflags(write=False)
        self.values = values
        self.n_actions = values.shape[1]

    def predict(self, state, action: int) -> float:
        return float(self.values[int(state), action])

    def predict_all(self, states) -> np.ndarray:
        idx = np.asarray(states, dtype=np.int64).reshape(-1)
        return self.values[idx]

    def min_values(self, states) -> np.ndarray:
        return self.predict_all(states).min(axis=1)


def model_predict(model, state, action: int) -> float:
    return model.predict(state, action)


def model_gradient(model, state, action: int) -> np.ndarray:
    return model.gradient(state, action)


def _unpack_inputs(inputs):
    if isinstance(inputs, tuple) and len(inputs) == 2:
        states, actions = inputs
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.int64)
    else:
        states = np.asarray([s for s, _ in inputs], dtype=np.float64)
        actions = np.asarray([a for _, a in inputs], dtype=np.int64)
    return states, actions


def make_objective(model: SigmoidLinearModel, features, actions, targets, loss: LossKind):
    """Batch objective theta -> (mean loss, gradient) over a fixed design.

    ``features`` is the precomputed (N, F) matrix.  For log-loss the
    per-sample gradient in z is (p - t): the sigmoid derivative cancels the
    loss singularity, so gradients stay finite for any parameter magnitude.
    Predictions are clamped to [LOG_EPS, 1-LOG_EPS] for the loss value only.
    """
    phi = np.asarray(features, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.float64)
    n = phi.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if not (actions.shape == targets.shape == (n,)):
        raise ValueError("inputs and targets must have equal length")
    if np.any(targets < 0.0) or np.any(targets > 1.0):
        raise ValueError("targets must lie in [0, 1]")
    n_actions, nf = model.n_actions, model.basis.n_features
    if np.any(actions < 0) or np.any(actions >= n_actions):
        raise ValueError("bad action index in batch")
    action_masks = [actions == a for a in range(n_actions)]

    def objective(theta_flat):
        theta = np.asarray(theta_flat, dtype=np.float64).reshape(n_actions, nf)
        z = np.einsum("nf,nf->n", phi, theta[actions])
        p = _sigmoid(z)
        pc = np.clip(p, LOG_EPS, 1.0 - LOG_EPS)
        if loss is LossKind.LOG:
            value = float(np.mean(-targets * np.log(pc) - (1.0 - targets) * np.log1p(-pc)))
            dz = (p - targets) / n
        else:
            value = float(np.mean((p - targets) ** 2))
            dz = 2.0 * (p - targets) * p * (1.0 - p) / n
        grad = np.zeros((n_actions, nf))
        for a in range(n_actions):
            m = action_masks[a]
            if m.any():
                grad[a] = dz[m] @ phi[m]
        return value, grad.reshape(-1)

    return objective


def empirical_objective(model: SigmoidLinearModel, params, inputs, targets, loss: LossKind):
    """Mean loss and exact gradient of the batch objective at ``params``."""
    states, actions = _unpack_inputs(inputs)
    phi = np.atleast_2d(model.basis.features(states))
    return make_objective(model, phi, actions, targets, loss)(params)


def tabular_fit(n_states: int, n_actions: int, states, actions, targets,
                loss: LossKind = LossKind.LOG, unseen_value: float = 1.0) -> TabularQModel:
    """Per-cell regression: both losses share the empirical-mean minimiser.

    Cells with no data default to ``unseen_value`` (1 = worst cost, a
    deterministic pessimistic-for-costs choice).
    """
    del loss  # log and squared losses have identical per-cell minimisers
    states = np.asarray(states, dtype=np.int64)
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.float64)
    if np.any(targets < 0.0) or np.any(targets > 1.0):
        raise ValueError("targets must lie in [0, 1]")
    cell = states * n_actions + actions
    counts = np.bincount(cell, minlength=n_states * n_actions).astype(np.float64)
    sums = np.bincount(cell, weights=targets, minlength=n_states * n_actions)
    values = np.full(n_states * n_actions, float(unseen_value))
    seen = counts > 0
    values[seen] = sums[seen] / counts[seen]
    return TabularQModel(values.reshape(n_states, n_actions))
