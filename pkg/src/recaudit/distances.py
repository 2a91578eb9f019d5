"""Distances between recommendation distributions on a shared candidate list."""
from __future__ import annotations

import numpy as np

from .errors import DataError
from .policy import RecommendationDistribution

L2 = "l2"
HELLINGER = "hellinger"
DISTANCES = (L2, HELLINGER)


class SupportMismatchError(DataError):
    pass


def _aligned(p, q) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(p, RecommendationDistribution) or isinstance(q, RecommendationDistribution):
        if not (
            isinstance(p, RecommendationDistribution)
            and isinstance(q, RecommendationDistribution)
            and np.array_equal(p.items, q.items)
        ):
            raise SupportMismatchError("distributions are over different candidate lists")
        p, q = p.probs, q.probs
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise SupportMismatchError(f"support sizes differ: {p.shape} vs {q.shape}")
    return p, q


def hellinger(p, q) -> float:
    """sqrt(1 - sum_j sqrt(p_j q_j)), clamped to [0, 1].

    Evaluated as sqrt(0.5 * sum (sqrt p - sqrt q)^2), which is the same
    quantity for normalized inputs but keeps precision near zero.
    """
    p, q = _aligned(p, q)
    h2 = 0.5 * float(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))
    return float(np.sqrt(min(max(h2, 0.0), 1.0)))


def l2_distance(p, q) -> float:
    p, q = _aligned(p, q)
    return float(np.linalg.norm(p - q))


def distance(kind: str, p, q) -> float:
    if kind == L2:
        return l2_distance(p, q)
    if kind == HELLINGER:
        return hellinger(p, q)
    raise ValueError(f"unknown distance {kind!r}")


def distance_grad(kind: str, p: np.ndarray, q: np.ndarray, value: float) -> np.ndarray:
    """Gradient of ``distance(kind, p, q)`` in ``p``; requires ``value > 0``."""
    if kind == L2:
        return (p - q) / value
    return (1.0 - np.sqrt(q / p)) / (4.0 * value)


def local_weights(kind: str, p: np.ndarray) -> np.ndarray:
    """Per-coordinate weights ``w`` with ``distance(p + dp, p) ~ |w * dp|`` as dp -> 0."""
    if kind == L2:
        return np.ones_like(p)
    return 1.0 / (2.0 * np.sqrt(2.0 * p))
