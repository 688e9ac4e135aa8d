"""Scalar losses and divergence primitives shared by training and theory checks.

All functions accept scalars or numpy arrays and are pure.  ``log_loss`` is
the raw, unclamped quantity (it returns +inf on the boundary mismatch cases);
optimisation code clamps predictions to [LOG_EPS, 1-LOG_EPS] before calling it
so gradients stay finite.
"""

from __future__ import annotations

import enum

import numpy as np

# Clamp width used by optimisers before evaluating log_loss.  Sigmoid outputs
# never reach 0/1 exactly but accumulated rounding can.
LOG_EPS = 1e-12


class LossKind(enum.Enum):
    LOG = "log"
    SQUARED = "squared"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "LossKind":
        for kind in cls:
            if kind.value == text:
                return kind
        raise ValueError(f"unknown loss kind {text!r}; expected 'log' or 'squared'")


def _check_unit(x, name: str):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return x


def log_loss(y, t):
    """Binary cross-entropy t*log(1/y) + (1-t)*log(1/(1-y)), with 0*log(1/0) = 0.

    Returns +inf when t > 0, y = 0 or t < 1, y = 1.  Inputs outside [0, 1]
    raise ValueError.
    """
    y = _check_unit(y, "prediction")
    t = _check_unit(t, "target")
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(t > 0.0, t * -np.log(y), 0.0)
        second = np.where(t < 1.0, (1.0 - t) * -np.log1p(-y), 0.0)
    out = first + second
    if out.ndim == 0:
        return float(out)
    return out


def squared_loss(y, t):
    """(y - t)^2, defined for all reals."""
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    out = (y - t) ** 2
    if out.ndim == 0:
        return float(out)
    return out


def hellinger_sq(p, q):
    """Squared Hellinger distance between Bernoulli(p) and Bernoulli(q)."""
    p = _check_unit(p, "p")
    q = _check_unit(q, "q")
    out = 0.5 * (np.sqrt(p) - np.sqrt(q)) ** 2 + 0.5 * (np.sqrt(1.0 - p) - np.sqrt(1.0 - q)) ** 2
    if out.ndim == 0:
        return float(out)
    return out


def triangular_dev(f, q):
    """Pointwise triangular deviation (f - q)/sqrt(f + q), with 0/0 -> 0.

    Inputs must be nonnegative.
    """
    f = np.asarray(f, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if np.any(f < 0.0) or np.any(q < 0.0):
        raise ValueError("triangular_dev requires nonnegative inputs")
    denom = np.sqrt(f + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom > 0.0, (f - q) / np.where(denom > 0.0, denom, 1.0), 0.0)
    if out.ndim == 0:
        return float(out)
    return out
