"""Finite-MDP machinery: Bellman operator, value iteration, occupancy measures,
and the concentrability coefficient of a data distribution.

Conventions: a Q-table is an (S, A) float array, a state distribution an (S,)
probability vector, a state-action distribution an (S, A) array summing to 1,
and a policy an (S, A) row-stochastic array.  All operations are pure; MDP
arrays are frozen after construction so instances can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ROWSUM_TOL = 1e-12


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP (S, A, P, c, gamma) with costs normalised to [0, 1-gamma].

    The pointwise cost bound is a sufficient condition for every trajectory's
    discounted cost sum to land in [0, 1].
    """

    transition: np.ndarray  # (S, A, S)
    cost: np.ndarray        # (S, A)
    discount: float

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.transition, dtype=np.float64))
        c = np.ascontiguousarray(np.asarray(self.cost, dtype=np.float64))
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError("transition must have shape (S, A, S)")
        if c.shape != p.shape[:2]:
            raise ValueError("cost must have shape (S, A)")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if np.any(p < 0.0):
            raise ValueError("transition probabilities must be nonnegative")
        if np.any(np.abs(p.sum(axis=2) - 1.0) > _ROWSUM_TOL):
            raise ValueError("transition rows must sum to 1")
        if np.any(c < 0.0) or np.any(c > 1.0 - self.discount + 1e-12):
            raise ValueError("costs must lie in [0, 1-gamma]")
        p.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "cost", c)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def dump(self) -> str:
        """Structured-text dump, used for test fixtures and debugging."""
        lines = [
            f"states={self.n_states} actions={self.n_actions} gamma={self.discount!r}",
        ]
        for s in range(self.n_states):
            for a in range(self.n_actions):
                row = ",".join(repr(x) for x in self.transition[s, a])
                lines.append(f"s={s} a={a} cost={self.cost[s, a]!r} next=[{row}]")
        return "\n".join(lines)


def check_state_dist(eta, n_states: int) -> np.ndarray:
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (n_states,):
        raise ValueError("state distribution has wrong shape")
    if np.any(eta < 0.0) or abs(eta.sum() - 1.0) > _ROWSUM_TOL:
        raise ValueError("state distribution must be nonnegative and sum to 1")
    return eta


def check_policy(pi, n_states: int, n_actions: int) -> np.ndarray:
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (n_states, n_actions):
        raise ValueError("policy has wrong shape")
    if np.any(pi < 0.0) or np.any(np.abs(pi.sum(axis=1) - 1.0) > _ROWSUM_TOL):
        raise ValueError("policy rows must be distributions")
    return pi


def bellman_apply(mdp: TabularMdp, f: np.ndarray) -> np.ndarray:
    """(Tf)(s,a) = c(s,a) + gamma * sum_s' P(s'|s,a) min_a' f(s',a')."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError("Q-table has wrong shape")
    fmin = f.min(axis=1)
    return mdp.cost + mdp.discount * (mdp.transition @ fmin)


def greedy_policy_of(f: np.ndarray) -> np.ndarray:
    """Deterministic policy picking the smallest-index minimiser per state."""
    f = np.asarray(f, dtype=np.float64)
    pi = np.zeros_like(f)
    pi[np.arange(f.shape[0]), f.argmin(axis=1)] = 1.0
    return pi


def optimal_q(mdp: TabularMdp, tol: float = 1e-10) -> np.ndarray:
    """Value iteration from 0 with a certified sup-norm stopping rule.

    Stops once the step size is at most tol*(1-gamma)/gamma, which guarantees
    the returned table is within tol of the fixed point.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    gamma = mdp.discount
    threshold = np.inf if gamma == 0.0 else tol * (1.0 - gamma) / gamma
    q = np.zeros((mdp.n_states, mdp.n_actions))
    while True:
        q_next = bellman_apply(mdp, q)
        step = np.abs(q_next - q).max()
        q = q_next
        if step <= threshold:
            return q


def policy_q(mdp: TabularMdp, pi: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Action values of a stationary policy by fixed-point iteration."""
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    pi = check_policy(pi, mdp.n_states, mdp.n_actions)
    gamma = mdp.discount
    threshold = np.inf if gamma == 0.0 else tol * (1.0 - gamma) / gamma
    q = np.zeros((mdp.n_states, mdp.n_actions))
    while True:
        v = (pi * q).sum(axis=1)
        q_next = mdp.cost + gamma * (mdp.transition @ v)
        step = np.abs(q_next - q).max()
        q = q_next
        if step <= threshold:
            return q


def solve_policy_values(mdp: TabularMdp, pi: np.ndarray):
    """Exact (v, q) of a stationary policy via a linear solve."""
    pi = check_policy(pi, mdp.n_states, mdp.n_actions)
    p_pi = np.einsum("sa,sax->sx", pi, mdp.transition)
    c_pi = (pi * mdp.cost).sum(axis=1)
    v = np.linalg.solve(np.eye(mdp.n_states) - mdp.discount * p_pi, c_pi)
    q = mdp.cost + mdp.discount * (mdp.transition @ v)
    return v, q


def policy_transition(mdp: TabularMdp, pi: np.ndarray) -> np.ndarray:
    """State-to-state kernel of a stationary policy."""
    pi = check_policy(pi, mdp.n_states, mdp.n_actions)
    return np.einsum("sa,sax->sx", pi, mdp.transition)


def occupancy(mdp: TabularMdp, eta1, pi, h: int) -> np.ndarray:
    """State distribution at step h >= 1 under a stationary policy."""
    if h < 1:
        raise ValueError("h must be >= 1")
    eta = check_state_dist(eta1, mdp.n_states)
    p_pi = policy_transition(mdp, pi)
    for _ in range(h - 1):
        eta = eta @ p_pi
    return eta


def value_of(eta, v) -> float:
    """Inner product <eta, v> of a state distribution with a state function."""
    eta = np.asarray(eta, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if eta.shape != v.shape:
        raise ValueError("shape mismatch")
    return float(eta @ v)


def max_arrival_probs(mdp: TabularMdp, eta1, horizon: int):
    """Exact per-step suprema of arrival probability, plus a tail bound.

    Returns (m, tail) where m[h-1, s] = sup over nonstationary policies of
    P(S_h = s) for h = 1..horizon, and tail[s] bounds sup over all h > horizon.
    The supremum for a single (s, h) target is an optimal-control problem with
    terminal reward 1{S_h = s}; one backward sweep per target state yields the
    values for every h at once.  tail[s] is the max over start states of the
    final backward vector, which dominates all later steps because the
    backward operator cannot increase the max.
    """
    eta = check_state_dist(eta1, mdp.n_states)
    n = mdp.n_states
    m = np.empty((horizon, n))
    tail = np.empty(n)
    for s in range(n):
        u = np.zeros(n)
        u[s] = 1.0
        m[0, s] = eta[s]
        for t in range(1, horizon):
            u = (mdp.transition @ u).max(axis=1)
            m[t, s] = eta @ u
        u = (mdp.transition @ u).max(axis=1)
        tail[s] = u.max()
    return m, tail


def concentrability(mdp: TabularMdp, eta1, mu, horizon: int) -> float:
    """Worst density ratio of any admissible distribution against mu, up to a horizon.

    rho_h(s, a) = sup over nonstationary policies of P(S_h = s, A_h = a)
    equals the optimal arrival probability at s: the action at step h is free.
    Returns max over (s, a) and h <= horizon of rho_h(s, a) / mu(s, a); +inf
    where positive rho meets zero mu.  Lower-bounds the full coefficient and
    converges to it as horizon grows.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError("mu has wrong shape")
    if np.any(mu < 0.0) or abs(mu.sum() - 1.0) > _ROWSUM_TOL:
        raise ValueError("mu must be a state-action distribution")
    m, _ = max_arrival_probs(mdp, eta1, horizon)
    rho = m.max(axis=0)  # (S,) best arrival probability per state
    mu_min = mu.min(axis=1)
    with np.errstate(divide="ignore"):
        ratios = np.where(rho > 0.0, rho / mu_min, 0.0)
    return float(ratios.max())


def random_mdp(seed: int, n_states: int, n_actions: int, gamma: float) -> TabularMdp:
    """Random instance: flat-Dirichlet transition rows, costs uniform in [0, 1-gamma]."""
    if n_states < 1 or n_actions < 1:
        raise ValueError("sizes must be >= 1")
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    c = rng.uniform(0.0, 1.0 - gamma, size=(n_states, n_actions))
    return TabularMdp(transition=p, cost=c, discount=gamma)
