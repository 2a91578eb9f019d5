"""Solvers for the audit objectives.

``analytic_gradient`` needs a white-box objective (one exposing
``gradient``); ``zeroth_order_gradient`` only evaluates the objective, so it
also drives black-box audits.  ``extreme_point_oracle`` enumerates the corners
of the rating box, which is exact for past stability.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BudgetError, ConfigError, NumericalError, UnsupportedModeError

GD = "gd"
ZO = "zo"
ORACLE = "oracle"
OPTIMIZERS = (GD, ZO, ORACLE)

LR_PAST = 0.5
LR_FUTURE = 5.0
ORACLE_MAX_K = 20

RAW = "raw"
NORMALIZED = "normalized"
STEP_RULES = (RAW, NORMALIZED)


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = GD
    epochs: int = 50
    learning_rate: float | None = None  # None -> LR_PAST / LR_FUTURE by params mode
    lo: float = 1.0
    hi: float = 5.0
    eps: float = 1e-3
    num_z: int = 16
    seed: int = 0
    monotone_accept: bool = True
    step_rule: str = NORMALIZED

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.kind!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not self.lo < self.hi:
            raise ConfigError("need lo < hi")
        if self.eps <= 0:
            raise ConfigError("eps must be > 0")
        if self.num_z < 1:
            raise ConfigError("num_z must be >= 1")
        if self.step_rule not in STEP_RULES:
            raise ConfigError(f"unknown step rule {self.step_rule!r}")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")

    def lr_for(self, mode: str) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return LR_FUTURE if mode == "future" else LR_PAST


def analytic_gradient(objective, params) -> np.ndarray:
    grad_fn = getattr(objective, "gradient", None)
    if grad_fn is None:
        raise UnsupportedModeError(
            f"{type(objective).__name__} is black-box; use zeroth_order_gradient"
        )
    return grad_fn(params)


def zeroth_order_gradient(objective: Callable, theta, eps: float, num_z: int,
                          rng: np.random.Generator, bounds=(1.0, 5.0),
                          kink_fallback: bool = True) -> np.ndarray:
    """Symmetric-difference estimate along Gaussian directions.

    Returns ``mean_z [(f(theta + eps z) - f(theta - eps z)) / (2 eps)] z`` with
    ``z ~ N(0, I)``; perturbed points are projected onto ``bounds`` (pass
    ``None`` to disable).

    At a symmetric kink such as ``|M (theta - theta0)|`` every pair of probes
    ties and the estimate vanishes although the objective rises in all
    directions.  With ``kink_fallback`` that case (probes rise above
    ``f(theta)`` but agree pairwise to 1e-6 of the rise) returns the best
    probe direction scaled by its slope instead.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if eps <= 0 or num_z < 1:
        raise ConfigError("need eps > 0 and num_z >= 1")
    z = rng.standard_normal((num_z,) + theta.shape)
    est = np.zeros_like(theta)
    f_plus = np.empty(num_z)
    f_minus = np.empty(num_z)
    for n, zk in enumerate(z):
        plus, minus = theta + eps * zk, theta - eps * zk
        if bounds is not None:
            plus = np.clip(plus, *bounds)
            minus = np.clip(minus, *bounds)
        f_plus[n], f_minus[n] = objective(plus), objective(minus)
        diff = f_plus[n] - f_minus[n]
        if not np.isfinite(diff):
            raise NumericalError("non-finite objective during finite differencing")
        est += (diff / (2.0 * eps)) * zk
    est /= num_z
    if kink_fallback:
        asym = float(np.max(np.abs(f_plus - f_minus)))
        top = float(max(f_plus.max(), f_minus.max()))
        rise = top - float(objective(theta)) if top > -np.inf else 0.0
        if rise > 0 and asym <= 1e-6 * rise:
            n = int(np.argmax(np.maximum(f_plus, f_minus)))
            sign = 1.0 if f_plus[n] >= f_minus[n] else -1.0
            zk = sign * z[n]
            return (rise / (eps * np.linalg.norm(zk))) * zk / np.linalg.norm(zk)
    return est


def projected_gradient_ascent(objective: Callable, gradient_fn: Callable, init,
                              config: OptimizerConfig = OptimizerConfig(), lr: float | None = None):
    """Box-constrained ascent ``theta <- clip(theta + lr d, [lo, hi])``.

    ``d`` is the gradient itself under the ``raw`` step rule, or the gradient
    divided by its largest absolute entry under ``normalized`` (so ``lr`` is
    the largest per-coordinate move in rating units).

    With ``monotone_accept`` a step that lowers the objective is rejected and
    the step size halved (never below 1e-8 of the initial size), so the trace
    of accepted values is non-decreasing.  The trace holds one value per epoch.
    """
    lr0 = config.learning_rate if lr is None else lr
    if lr0 is None:
        lr0 = LR_PAST
    floor = 1e-8 * lr0
    theta = np.clip(np.asarray(init, dtype=np.float64), config.lo, config.hi)
    value = float(objective(theta))
    if not np.isfinite(value):
        raise NumericalError("non-finite objective at initialization")
    step = lr0
    trace: list[float] = []
    for epoch in range(config.epochs):
        g = np.asarray(gradient_fn(theta), dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient at epoch {epoch}")
        if config.step_rule == NORMALIZED:
            scale = float(np.max(np.abs(g))) if g.size else 0.0
            g = g / scale if scale > 0 else g
        cand = np.clip(theta + step * g, config.lo, config.hi)
        cand_value = float(objective(cand))
        if not np.isfinite(cand_value):
            raise NumericalError(f"non-finite objective at epoch {epoch}")
        if config.monotone_accept and cand_value < value:
            step = max(step / 2.0, floor)
        else:
            theta, value = cand, cand_value
        trace.append(value)
    return theta, trace


def extreme_point_oracle(objective: Callable, k: int, lo: float = 1.0, hi: float = 5.0):
    """Best of the ``2**k`` corners of ``[lo, hi]^k``; ties keep the
    lexicographically smallest corner."""
    if k > ORACLE_MAX_K:
        raise BudgetError(f"k={k} needs 2**{k} evaluations; limit is k <= {ORACLE_MAX_K}")
    if k < 0:
        raise ConfigError("k must be >= 0")
    best, best_value = None, -np.inf
    for corner in itertools.product((lo, hi), repeat=k):
        theta = np.array(corner, dtype=np.float64)
        value = float(objective(theta))
        if value > best_value:
            best, best_value = theta, value
    return best, best_value
