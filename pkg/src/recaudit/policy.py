"""Item-selection policies over a user's unrated candidates."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import ConfigError, EmptyCandidatesError, NumericalError


class PolicyKind(str, Enum):
    TOP_ONE = "top1"
    SOFTMAX = "softmax"


@dataclass(frozen=True)
class RecPolicy:
    kind: PolicyKind
    beta: float | None = None

    def __post_init__(self):
        if self.kind is PolicyKind.SOFTMAX and not (self.beta is not None and self.beta > 0):
            raise ConfigError("softmax policy needs beta > 0")

    @classmethod
    def softmax(cls, beta: float) -> "RecPolicy":
        return cls(PolicyKind.SOFTMAX, float(beta))

    @classmethod
    def top_one(cls) -> "RecPolicy":
        return cls(PolicyKind.TOP_ONE)


@dataclass(frozen=True)
class RecommendationDistribution:
    items: np.ndarray
    probs: np.ndarray

    def prob(self, item) -> float:
        pos = np.searchsorted(self.items, item)
        if pos >= len(self.items) or self.items[pos] != item:
            return 0.0
        return float(self.probs[pos])

    def __len__(self):
        return len(self.items)


def candidate_set(history: Iterable, all_items: Iterable) -> np.ndarray:
    """Items in ``all_items`` not in ``history``, ascending."""
    cands = np.setdiff1d(np.asarray(list(all_items)), np.asarray(list(history)))
    if len(cands) == 0:
        raise EmptyCandidatesError("user has rated every item; nothing to recommend")
    return cands


def softmax_probs(scores: np.ndarray, beta: float) -> np.ndarray:
    """Max-shifted ``exp(beta s) / sum exp(beta s)``."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyCandidatesError("no candidates")
    if not np.all(np.isfinite(scores)):
        raise NumericalError("non-finite score")
    z = beta * (scores - scores.max())
    e = np.exp(z)
    return e / e.sum()


def softmax_distribution(scores, beta: float, items=None) -> RecommendationDistribution:
    if not beta > 0:
        raise ConfigError("beta must be > 0")
    probs = softmax_probs(scores, beta)
    if items is None:
        items = np.arange(len(probs))
    return RecommendationDistribution(np.asarray(items), probs)


def top_one(scores, items=None):
    """Highest-scoring candidate; ties go to the smallest item index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyCandidatesError("no candidates")
    if not np.all(np.isfinite(scores)):
        raise NumericalError("non-finite score")
    # candidates are stored ascending, so argmax's first hit is the smallest index
    k = int(np.argmax(scores))
    return k if items is None else items[k]


def point_mass(items, item) -> RecommendationDistribution:
    items = np.asarray(items)
    probs = (items == item).astype(np.float64)
    return RecommendationDistribution(items, probs)


def sample(dist: RecommendationDistribution, rng: np.random.Generator):
    cdf = np.cumsum(dist.probs)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return dist.items[min(k, len(dist.items) - 1)]
