"""Dense BFGS with a strong-Wolfe line search (bracket and zoom, cubic steps).

The objective callable returns (value, gradient) jointly.  Parameter spaces
here are tiny (tens of dimensions), so the full inverse Hessian is kept; the
line search starts from a unit trial step, which keeps the method free of any
learning-rate knob.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Termination(enum.Enum):
    GRAD_TOL = "grad_tol"
    MAX_ITERS = "max_iters"
    LINE_SEARCH_FAIL = "line_search_fail"


@dataclass(frozen=True)
class BfgsOptions:
    grad_tol: float = 1e-6          # sup-norm of the gradient
    max_iters: int = 500
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_line_search_steps: int = 50

    def __post_init__(self):
        if not (0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0):
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.grad_tol <= 0.0 or self.max_iters < 1:
            raise ValueError("tolerances must be positive")


@dataclass
class BfgsResult:
    x_star: np.ndarray
    f_star: float
    grad_norm: float
    iters: int
    converged: bool
    termination: Termination
    f_history: list = field(default_factory=list)  # accepted objective values, incl. x0


# Curvature threshold below which the inverse-Hessian update is skipped.
_CURVATURE_EPS = 1e-10


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic Hermite interpolant on [a, b]; None if ill-posed."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0.0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = gb - ga + 2.0 * d2
    if denom == 0.0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


class _Tracker:
    """Remembers the best point seen across all objective evaluations."""

    def __init__(self, objective):
        self._objective = objective
        self.best_x = None
        self.best_f = np.inf
        self.best_g = None

    def __call__(self, x):
        f, g = self._objective(x)
        g = np.asarray(g, dtype=np.float64)
        if np.isfinite(f) and f < self.best_f:
            self.best_x = np.array(x)
            self.best_f = float(f)
            self.best_g = g.copy()
        return float(f), g


def _wolfe_search(fun, x, d, f0, g0, opts: BfgsOptions):
    """Strong-Wolfe step along d from x.  Returns (alpha, f, g) or None."""
    dg0 = float(g0 @ d)
    if dg0 >= 0.0:
        return None
    c1, c2 = opts.wolfe_c1, opts.wolfe_c2
    evals = 0

    def phi(alpha):
        nonlocal evals
        evals += 1
        f, g = fun(x + alpha * d)
        return f, g, float(g @ d)

    def zoom(lo, f_lo, g_lo, hi, f_hi, g_hi):
        nonlocal evals
        while evals < opts.max_line_search_steps:
            trial = _cubic_min(lo, f_lo, g_lo, hi, f_hi, g_hi)
            span = abs(hi - lo)
            inner_lo, inner_hi = min(lo, hi), max(lo, hi)
            if (
                trial is None
                or not np.isfinite(trial)
                or trial <= inner_lo + 0.05 * span
                or trial >= inner_hi - 0.05 * span
            ):
                trial = 0.5 * (lo + hi)
            f_t, g_vec, g_t = phi(trial)
            if not np.isfinite(f_t) or f_t > f0 + c1 * trial * dg0 or f_t >= f_lo:
                hi, f_hi, g_hi = trial, f_t, g_t
            else:
                if abs(g_t) <= -c2 * dg0:
                    return trial, f_t, g_vec
                if g_t * (hi - lo) >= 0.0:
                    hi, f_hi, g_hi = lo, f_lo, g_lo
                lo, f_lo, g_lo = trial, f_t, g_t
            if abs(hi - lo) < 1e-16:
                return None
        return None

    alpha_prev, f_prev, g_prev = 0.0, f0, dg0
    alpha = 1.0
    first = True
    while evals < opts.max_line_search_steps:
        f_a, g_vec, g_a = phi(alpha)
        if not np.isfinite(f_a) or f_a > f0 + c1 * alpha * dg0 or (not first and f_a >= f_prev):
            return zoom(alpha_prev, f_prev, g_prev, alpha, f_a, g_a)
        if abs(g_a) <= -c2 * dg0:
            return alpha, f_a, g_vec
        if g_a >= 0.0:
            return zoom(alpha, f_a, g_a, alpha_prev, f_prev, g_prev)
        alpha_prev, f_prev, g_prev = alpha, f_a, g_a
        alpha *= 2.0
        first = False
    return None


def bfgs_minimize(objective, x0, opts: BfgsOptions = BfgsOptions()) -> BfgsResult:
    """Minimise a smooth objective; objective(x) must return (value, gradient).

    Raises ValueError if the objective is non-finite at x0.  On a failed line
    search the best iterate seen so far is returned with termination
    LINE_SEARCH_FAIL.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    fun = _Tracker(objective)
    f, g = fun(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective is non-finite at the starting point")

    n = x.size
    identity = np.eye(n)
    h_inv = identity.copy()
    history = [f]

    def finish(term: Termination, iters: int) -> BfgsResult:
        xs, fs, gs = fun.best_x, fun.best_f, fun.best_g
        return BfgsResult(
            x_star=xs,
            f_star=fs,
            grad_norm=float(np.abs(gs).max()),
            iters=iters,
            converged=term is Termination.GRAD_TOL,
            termination=term,
            f_history=history,
        )

    for it in range(opts.max_iters):
        if np.abs(g).max() <= opts.grad_tol:
            return finish(Termination.GRAD_TOL, it)
        d = -(h_inv @ g)
        if float(d @ g) >= 0.0:
            # Numerical loss of positive definiteness: restart from identity.
            h_inv = identity.copy()
            d = -g
        step = _wolfe_search(fun, x, d, f, g, opts)
        if step is None:
            return finish(Termination.LINE_SEARCH_FAIL, it)
        alpha, f_new, g_new = step
        s = alpha * d
        y = g_new - g
        x = x + s
        f, g = f_new, g_new
        history.append(f)
        sy = float(s @ y)
        if sy > _CURVATURE_EPS * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            # H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            hy = h_inv @ y
            h_inv = (
                h_inv
                - rho * (np.outer(s, hy) + np.outer(hy, s))
                + rho * rho * float(y @ hy) * np.outer(s, s)
                + rho * np.outer(s, s)
            )
    if np.abs(g).max() <= opts.grad_tol:
        return finish(Termination.GRAD_TOL, opts.max_iters)
    return finish(Termination.MAX_ITERS, opts.max_iters)
