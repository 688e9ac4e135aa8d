"""Numerical verification of the inequality chain behind the small-cost
analysis, over randomized tabular instances.

Each check evaluates an inequality exactly as stated (no loosened constants)
and reports the worst violation max(LHS - RHS) across instances.  Where a
statement involves a supremum over all time steps or a concentrability
coefficient valid for every admissible distribution, the computed quantity is
a certified upper bound (truncated sweep plus a convergence tail term), so a
finite computation can never flag a spurious violation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .losses import hellinger_sq, triangular_dev
from .tabular import (
    TabularMdp,
    bellman_apply,
    concentrability,
    greedy_policy_of,
    max_arrival_probs,
    optimal_q,
    policy_transition,
    random_mdp,
    solve_policy_values,
)

POINTWISE_TOL = 1e-10
NORM_TOL = 1e-10
CONTRACTION_TOL = 1e-9
DECOMPOSITION_TOL = 1e-8
TRUNCATION_TARGET = 1e-8  # gamma^H <= this picks the sweep horizon


@dataclass(frozen=True)
class TheoryReport:
    lemma_id: str
    n_instances: int
    worst_violation: float
    tolerance: float
    passed: bool
    seed: int

    @staticmethod
    def build(lemma_id, n_instances, worst, tolerance, seed) -> "TheoryReport":
        return TheoryReport(lemma_id, n_instances, float(worst), tolerance,
                            bool(worst <= tolerance), seed)

    def to_dict(self) -> dict:
        return {
            "lemma_id": self.lemma_id,
            "n_instances": self.n_instances,
            "worst_violation": self.worst_violation,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "seed": self.seed,
        }

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.lemma_id}: worst_violation={self.worst_violation:.3e} "
                f"tol={self.tolerance:.0e} instances={self.n_instances}")


@dataclass(frozen=True)
class XiDelta:
    """xi = f + q*, delta = (f - q*)/sqrt(f + q*), and the swept deviation bound."""

    xi: np.ndarray
    delta: np.ndarray
    d_f: float


def _norm1(x, w) -> float:
    return float(np.sum(w * np.abs(x)))


def _norm2(x, w) -> float:
    return float(np.sqrt(np.sum(w * x * x)))


def exact_optimal_q(mdp: TabularMdp) -> np.ndarray:
    """q* to machine precision: value iteration then policy-iteration polish."""
    q = optimal_q(mdp, tol=1e-8)
    for _ in range(100):
        pi = greedy_policy_of(q)
        _, q_new = solve_policy_values(mdp, pi)
        if np.array_equal(greedy_policy_of(q_new), pi) or np.abs(q_new - q).max() < 1e-14:
            q = q_new
            break
        q = q_new
    residual = np.abs(bellman_apply(mdp, q) - q).max()
    if residual > 1e-10:
        raise RuntimeError(f"optimal-value polish failed, residual {residual:.2e}")
    return q


def _random_instance(rng, max_states=6, max_actions=3, gamma_range=(0.3, 0.9)):
    n_states = int(rng.integers(2, max_states + 1))
    n_actions = int(rng.integers(1, max_actions + 1))
    gamma = float(rng.uniform(*gamma_range))
    mdp = random_mdp(int(rng.integers(0, 2 ** 31)), n_states, n_actions, gamma)
    eta1 = rng.dirichlet(np.ones(n_states))
    return mdp, eta1


def _admissible_dist(rng, mdp: TabularMdp, eta1, max_h: int = 8):
    """Occupancy of a random nonstationary policy at a random step (Def. of
    admissibility, realised constructively)."""
    h = int(rng.integers(1, max_h + 1))
    eta = np.asarray(eta1, dtype=np.float64)
    for _ in range(h - 1):
        step_policy = rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states)
        eta = eta @ policy_transition(mdp, step_policy)
    last_policy = rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states)
    return eta[:, None] * last_policy, h


def _concentrability_upper(mdp: TabularMdp, eta1, mu, horizon: int = 64) -> float:
    """Upper bound on the all-horizons coefficient: exact sweep plus sup-norm tail."""
    m, tail = max_arrival_probs(mdp, eta1, horizon)
    rho = np.maximum(m.max(axis=0), tail)
    return float((rho / mu.min(axis=1)).max())


def verify_pointwise_inequalities(seed: int, n_instances: int):
    """Scalar Hellinger chain, sqrt-shift nonexpansion, and min-nonexpansion."""
    rng = np.random.default_rng(seed)

    # (i) 0.25 (p-q)^2/(p+q) <= 0.5 (sqrt p - sqrt q)^2 <= hell^2(p, q)
    p = rng.uniform(0.0, 1.0, n_instances)
    q = rng.uniform(0.0, 1.0, n_instances)
    edges = np.array([0.0, 1e-12, 0.5, 1.0 - 1e-12, 1.0])
    grid_p, grid_q = np.meshgrid(edges, edges)
    p = np.concatenate([p, grid_p.ravel(), edges])  # final block: p = q cases
    q = np.concatenate([q, grid_q.ravel(), edges])
    lhs = 0.25 * triangular_dev(p, q) ** 2
    mid = 0.5 * (np.sqrt(p) - np.sqrt(q)) ** 2
    rhs = hellinger_sq(p, q)
    worst_chain = max(float((lhs - mid).max()), float((mid - rhs).max()))

    # (ii) |sqrt(x+a) - sqrt(x+b)| <= |sqrt a - sqrt b| for x, a, b >= 0
    scale = 10.0 ** rng.uniform(-6, 3, (n_instances, 3))
    xab = rng.uniform(0.0, 1.0, (n_instances, 3)) * scale
    x, a, b = xab[:, 0], xab[:, 1], xab[:, 2]
    worst_shift = float((np.abs(np.sqrt(x + a) - np.sqrt(x + b))
                         - np.abs(np.sqrt(a) - np.sqrt(b))).max())

    # (iii) ||sqrt(f^min) - sqrt(g^min)||_{2,eta} <= ||sqrt f - sqrt g||_{2,eta x pi_fg}
    worst_min = -np.inf
    for i in range(n_instances):
        r = np.random.default_rng([seed, 1, i])
        n_states = int(r.integers(1, 7))
        n_actions = int(r.integers(1, 4))
        f = r.uniform(0.0, 2.0, (n_states, n_actions))
        g = r.uniform(0.0, 2.0, (n_states, n_actions))
        if i % 17 == 0:
            g = f.copy()  # the both-sides-zero case
        eta = r.dirichlet(np.ones(n_states))
        pick = np.minimum(f, g).argmin(axis=1)
        rows = np.arange(n_states)
        lhs_v = math.sqrt(float(np.sum(
            eta * (np.sqrt(f.min(axis=1)) - np.sqrt(g.min(axis=1))) ** 2)))
        rhs_v = math.sqrt(float(np.sum(
            eta * (np.sqrt(f[rows, pick]) - np.sqrt(g[rows, pick])) ** 2)))
        worst_min = max(worst_min, lhs_v - rhs_v)

    return [
        TheoryReport.build("scalar_hellinger_chain", n_instances, worst_chain,
                           POINTWISE_TOL, seed),
        TheoryReport.build("sqrt_shift_nonexpansion", n_instances, worst_shift,
                           POINTWISE_TOL, seed),
        TheoryReport.build("min_nonexpansion", n_instances, worst_min,
                           POINTWISE_TOL, seed),
    ]


def verify_norm_inequalities(seed: int, n_instances: int):
    """Weighted-norm lemmas on random MDPs: multiplicative Cauchy-Schwarz, the
    xi bound, change of measure, and the sqrt-expectation nonexpansion."""
    worst = {"cs": -np.inf, "xi": -np.inf, "com": -np.inf, "sqrtexp": -np.inf}
    for i in range(n_instances):
        rng = np.random.default_rng([seed, 2, i])
        mdp, eta1 = _random_instance(rng)
        q_star = exact_optimal_q(mdp)
        f = rng.uniform(0.0, 1.0, q_star.shape)
        if i % 13 == 0:
            f = q_star.copy()  # equality case of the first lemma
        nu_any = rng.dirichlet(np.ones(q_star.size)).reshape(q_star.shape)
        xi = f + q_star
        delta = triangular_dev(f, q_star)

        lhs = _norm1(f - q_star, nu_any)
        rhs = math.sqrt(_norm1(xi, nu_any)) * _norm2(delta, nu_any)
        worst["cs"] = max(worst["cs"], lhs - rhs)

        lhs = _norm1(xi, nu_any)
        rhs = 4.0 * _norm1(q_star, nu_any) + _norm2(delta, nu_any) ** 2
        worst["xi"] = max(worst["xi"], lhs - rhs)

        nu_adm, _h = _admissible_dist(rng, mdp, eta1, max_h=8)
        mu = rng.dirichlet(np.ones(q_star.size)).reshape(q_star.shape)
        c = concentrability(mdp, eta1, mu, horizon=8)
        g = rng.normal(0.0, 1.0, q_star.shape)
        for p_exp in (1, 2):
            lhs = float(np.sum(nu_adm * np.abs(g) ** p_exp)) ** (1.0 / p_exp)
            rhs = c ** (1.0 / p_exp) * float(np.sum(mu * np.abs(g) ** p_exp)) ** (1.0 / p_exp)
            worst["com"] = max(worst["com"], lhs - rhs)

        lam = rng.dirichlet(np.ones(q_star.size))
        g1 = rng.uniform(0.0, 3.0, q_star.size)
        g2 = rng.uniform(0.0, 3.0, q_star.size)
        lhs = (math.sqrt(float(lam @ g1)) - math.sqrt(float(lam @ g2))) ** 2
        rhs = float(lam @ (np.sqrt(g1) - np.sqrt(g2)) ** 2)
        worst["sqrtexp"] = max(worst["sqrtexp"], lhs - rhs)

    return [
        TheoryReport.build("mult_cauchy_schwarz", n_instances, worst["cs"], NORM_TOL, seed),
        TheoryReport.build("xi_bound", n_instances, worst["xi"], NORM_TOL, seed),
        TheoryReport.build("change_of_measure", n_instances, worst["com"], NORM_TOL, seed),
        TheoryReport.build("sqrt_expectation_nonexpansion", n_instances,
                           worst["sqrtexp"], NORM_TOL, seed),
    ]


def verify_contraction_suite(seed: int, n_instances: int):
    """Hellinger contraction of the Bellman operator, the pseudo-contraction
    at q*, and the error-propagation bound."""
    worst = {"hc": -np.inf, "pc": -np.inf, "ep": -np.inf}
    for i in range(n_instances):
        rng = np.random.default_rng([seed, 3, i])
        mdp, eta1 = _random_instance(rng, gamma_range=(0.3, 0.95))
        gamma = mdp.discount
        shape = (mdp.n_states, mdp.n_actions)

        # (i) ||sqrt(Tf) - sqrt(Tg)||_{2,nu} <= sqrt(gamma) ||sqrt f - sqrt g||_{2,nuP x pi_fg}
        f = rng.uniform(0.0, 2.0, shape)
        g = f.copy() if i % 11 == 0 else rng.uniform(0.0, 2.0, shape)
        nu = rng.dirichlet(np.ones(f.size)).reshape(shape)
        tf, tg = bellman_apply(mdp, f), bellman_apply(mdp, g)
        lhs = _norm2(np.sqrt(tf) - np.sqrt(tg), nu)
        nu_p = np.einsum("sa,sax->x", nu, mdp.transition)
        pick = np.minimum(f, g).argmin(axis=1)
        w = np.zeros(shape)
        w[np.arange(mdp.n_states), pick] = nu_p
        rhs = math.sqrt(gamma) * _norm2(np.sqrt(f) - np.sqrt(g), w)
        worst["hc"] = max(worst["hc"], lhs - rhs)

        # (ii) ||sqrt f - sqrt q*||_{2,nu} <= sqrt(C)/(1 - sqrt gamma) * same under mu
        q_star = exact_optimal_q(mdp)
        nu_adm, _ = _admissible_dist(rng, mdp, eta1, max_h=8)
        mu = rng.dirichlet(np.ones(f.size)).reshape(shape)
        c_upper = _concentrability_upper(mdp, eta1, mu, horizon=64)
        f2 = rng.uniform(0.0, 2.0, shape)
        lhs = _norm2(np.sqrt(f2) - np.sqrt(q_star), nu_adm)
        rhs = math.sqrt(c_upper) / (1.0 - math.sqrt(gamma)) * \
            _norm2(np.sqrt(f2) - np.sqrt(q_star), mu)
        worst["pc"] = max(worst["pc"], lhs - rhs)

        # (iii) error propagation along an arbitrary sequence f_0..f_k
        k = int(rng.integers(1, 6))
        seq = [rng.uniform(0.0, 1.0, shape)]
        exact_backups = i % 7 == 0
        for _ in range(k):
            if exact_backups:
                seq.append(bellman_apply(mdp, seq[-1]))
            else:
                seq.append(rng.uniform(0.0, 1.5, shape))
        lhs = _norm2(np.sqrt(seq[k]) - np.sqrt(q_star), nu_adm)
        residual = max(
            _norm2(np.sqrt(seq[t]) - np.sqrt(bellman_apply(mdp, seq[t - 1])), mu)
            for t in range(1, k + 1)
        )
        rhs = gamma ** (k / 2.0) + 2.0 * math.sqrt(c_upper) / (1.0 - gamma) * residual
        worst["ep"] = max(worst["ep"], lhs - rhs)

    return [
        TheoryReport.build("hellinger_contraction", n_instances, worst["hc"],
                           CONTRACTION_TOL, seed),
        TheoryReport.build("pseudo_contraction", n_instances, worst["pc"],
                           CONTRACTION_TOL, seed),
        TheoryReport.build("error_propagation", n_instances, worst["ep"],
                           CONTRACTION_TOL, seed),
    ]


def _dobrushin(p: np.ndarray) -> float:
    """Ergodic coefficient 0.5 max_{x,y} ||P(x,.) - P(y,.)||_1."""
    diffs = np.abs(p[:, None, :] - p[None, :, :]).sum(axis=2)
    return 0.5 * float(diffs.max())


def _deviation_sweep(mdp, eta1, pi, pi_star, delta_sq, horizon: int):
    """Running max over h of the two occupancy-weighted norms of delta^2,
    plus a geometric tail bound once the occupancy chain contracts."""
    p_pi = policy_transition(mdp, pi)
    w_pi = (pi * delta_sq).sum(axis=1)
    w_star = (pi_star * delta_sq).sum(axis=1)
    eta = np.asarray(eta1, dtype=np.float64)
    best = -np.inf
    profile = []
    for _ in range(horizon):
        best = max(best, float(eta @ w_pi), float(eta @ w_star))
        profile.append(best)
        eta = eta @ p_pi
    step_change = float(np.abs(eta @ p_pi - eta).sum())
    contraction = _dobrushin(p_pi)
    w_max = float(max(w_pi.max(), w_star.max(), 0.0))
    if contraction < 1.0:
        tail = step_change / (1.0 - contraction) * w_max
    else:
        tail = w_max  # fallback: the unconditional bound
    return best, tail, profile


def make_xi_delta(mdp: TabularMdp, f, eta1, horizon: int) -> XiDelta:
    """Deviation summary of f against q*: the supremum is swept up to
    ``horizon`` (monotone nondecreasing in the horizon)."""
    f = np.asarray(f, dtype=np.float64)
    q_star = exact_optimal_q(mdp)
    xi = f + q_star
    delta = triangular_dev(f, q_star)
    pi = greedy_policy_of(f)
    pi_star = greedy_policy_of(q_star)
    best, _, _ = _deviation_sweep(mdp, eta1, pi, pi_star, delta ** 2, horizon)
    return XiDelta(xi=xi, delta=delta, d_f=math.sqrt(max(best, 0.0)))


def verify_decomposition_suite(seed: int, n_instances: int, horizon: int = 64):
    """Performance difference, per-step regret bound, the greedy-policy error
    decomposition with its stated constants, and the tail-value bound."""
    worst = {"pd": -np.inf, "rd": -np.inf, "gd": -np.inf, "tv": -np.inf}
    for i in range(n_instances):
        rng = np.random.default_rng([seed, 4, i])
        mdp, eta1 = _random_instance(rng, gamma_range=(0.4, 0.9))
        gamma = mdp.discount
        h_sweep = max(horizon, int(math.ceil(math.log(TRUNCATION_TARGET)
                                             / math.log(gamma))) + 1)
        q_star = exact_optimal_q(mdp)
        v_star = q_star.min(axis=1)
        pi_star = greedy_policy_of(q_star)
        f = q_star.copy() if i % 9 == 0 else rng.uniform(0.0, 1.2, q_star.shape)
        pi = greedy_policy_of(f)
        v_pi, q_pi = solve_policy_values(mdp, pi)
        vbar_pi = float(eta1 @ v_pi)
        vbar_star = float(eta1 @ v_star)
        del q_pi

        # (i) performance difference: equality up to the truncated tail
        advantage = (pi * q_star).sum(axis=1) - v_star  # q*(., pi) - v*
        p_pi = policy_transition(mdp, pi)
        eta = eta1.copy()
        series = 0.0
        weighted_v = []
        for h in range(h_sweep):
            series += gamma ** h * float(eta @ advantage)
            weighted_v.append(float(eta @ v_pi))
            eta = eta @ p_pi
        slack = gamma ** h_sweep / (1.0 - gamma)
        worst["pd"] = max(worst["pd"], abs((vbar_pi - vbar_star) - series) - slack)

        # (ii) regret decomposition at a random step
        xi = f + q_star
        delta = triangular_dev(f, q_star)
        h_probe = int(rng.integers(1, 17))
        eta_h = eta1.copy()
        for _ in range(h_probe - 1):
            eta_h = eta_h @ p_pi
        w_pi = eta_h[:, None] * pi
        w_star = eta_h[:, None] * pi_star
        lhs = float(eta_h @ advantage)
        rhs = (math.sqrt(_norm1(xi, w_pi)) + math.sqrt(_norm1(xi, w_star))) * \
            (_norm2(delta, w_pi) + _norm2(delta, w_star))
        worst["rd"] = max(worst["rd"], lhs - rhs)

        # (iii) greedy-policy error decomposition with constants 22 sqrt(2) and 512
        best, tail, _ = _deviation_sweep(mdp, eta1, pi, pi_star, delta ** 2, h_sweep)
        d_f = math.sqrt(max(best + tail, 0.0))
        lhs = vbar_pi - vbar_star
        rhs = 22.0 * math.sqrt(2.0) * d_f / (1.0 - gamma) * math.sqrt(vbar_star) \
            + 512.0 * d_f ** 2 / (1.0 - gamma) ** 2
        worst["gd"] = max(worst["gd"], lhs - rhs)

        # (iv) tail-value bound for pi (truncated series omits nonnegative terms)
        lhs = sum(gamma ** h * math.sqrt(max(weighted_v[h], 0.0)) for h in range(h_sweep))
        rhs = 2.0 * math.sqrt(max(vbar_pi, 0.0)) / (1.0 - gamma)
        worst["tv"] = max(worst["tv"], lhs - rhs)

    return [
        TheoryReport.build("performance_difference", n_instances, worst["pd"],
                           DECOMPOSITION_TOL, seed),
        TheoryReport.build("regret_decomposition", n_instances, worst["rd"],
                           DECOMPOSITION_TOL, seed),
        TheoryReport.build("greedy_error_decomposition", n_instances, worst["gd"],
                           DECOMPOSITION_TOL, seed),
        TheoryReport.build("tail_value", n_instances, worst["tv"],
                           DECOMPOSITION_TOL, seed),
    ]


def concentration_experiment(seed: int, n_samples: int, class_size: int,
                             delta: float, n_trials: int):
    """Monte-Carlo coverage test of the log-loss ERM concentration bound.

    Builds a finite class containing the true regression function plus
    perturbed competitors at log-spaced distances, draws Bernoulli labels,
    solves each trial's ERM by exhaustive search, and compares the exact
    integrated binary Hellinger loss against 2 log(|F|/delta)/n.  Returns
    (report, per-trial divergences).
    """
    if class_size < 1 or class_size > 64:
        raise ValueError("class_size must lie in [1, 64]")
    rng = np.random.default_rng(seed)
    n_points = 5
    nu = np.full(n_points, 1.0 / n_points)
    f_star = rng.uniform(0.2, 0.8, n_points)
    members = [f_star]
    if class_size > 1:
        eps = np.logspace(-3.0, math.log10(0.25), class_size - 1)
        signs = rng.choice([-1.0, 1.0], size=(class_size - 1, n_points))
        mags = rng.uniform(0.5, 1.0, size=(class_size - 1, n_points))
        for j in range(class_size - 1):
            members.append(np.clip(f_star + eps[j] * signs[j] * mags[j], 0.01, 0.99))
    f_class = np.stack(members)  # (|F|, n_points)
    if not np.array_equal(f_class[0], f_star):
        raise ValueError("true regression function must belong to the class")

    counts = rng.multinomial(n_samples, nu, size=n_trials)          # (T, m)
    hits = rng.binomial(counts, f_star)                             # (T, m)
    neg_log_f = -np.log(f_class)                                    # (|F|, m)
    neg_log_1mf = -np.log1p(-f_class)
    losses = hits @ neg_log_f.T + (counts - hits) @ neg_log_1mf.T   # (T, |F|)
    picked = losses.argmin(axis=1)
    member_div = (nu * hellinger_sq(f_class, f_star)).sum(axis=1)   # (|F|,)
    divergences = member_div[picked]

    bound = 2.0 * math.log(class_size / delta) / n_samples
    coverage = float(np.mean(divergences <= bound))
    required = 1.0 - delta - 2.0 * math.sqrt(delta * (1.0 - delta) / n_trials)
    report = TheoryReport.build("log_loss_concentration", n_trials,
                                required - coverage, 0.0, seed)
    return report, divergences


def verify_all(seed: int, instances: int, horizon: int = 64):
    """All suites at counts scaled from the headline instance budget."""
    reports = []
    reports += verify_pointwise_inequalities(seed, instances)
    reports += verify_norm_inequalities(seed, max(1, instances // 2))
    reports += verify_contraction_suite(seed, max(1, instances // 5))
    reports += verify_decomposition_suite(seed, max(1, instances // 10), horizon)
    concentration, _ = concentration_experiment(seed, n_samples=200, class_size=16,
                                                delta=0.1,
                                                n_trials=max(100, instances // 20))
    reports.append(concentration)
    return reports
