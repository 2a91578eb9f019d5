"""MovieLens-shaped synthetic ratings for tests and offline demos.

Ratings come from a planted low-rank model plus noise, rounded to 1..5.
Item popularity follows a Zipf-like law and user activity is skewed, so the
popularity/activity rank bands used by group studies are meaningful.
"""
from __future__ import annotations

import numpy as np

from .dataset import Dataset
from .errors import ConfigError


def synthetic_movielens(n_users: int = 300, n_items: int = 400, rank: int = 4,
                        min_per_user: int = 20, mean_per_user: float = 60.0,
                        zipf: float = 0.9, noise: float = 0.5,
                        seed: int = 0) -> Dataset:
    if n_users < 1 or n_items < 2 or rank < 1:
        raise ConfigError("need n_users >= 1, n_items >= 2, rank >= 1")
    if not 1 <= min_per_user < n_items:
        raise ConfigError("min_per_user must be in [1, n_items)")
    rng = np.random.default_rng(seed)
    U = rng.normal(0.0, 1.0, (n_users, rank)) / np.sqrt(rank)
    V = rng.normal(0.0, 1.0, (n_items, rank)) / np.sqrt(rank)
    bias = rng.normal(0.0, 0.3, n_items)

    pop = 1.0 / np.arange(1, n_items + 1) ** zipf
    pop = pop[rng.permutation(n_items)]
    pop /= pop.sum()
    activity = rng.lognormal(0.0, 0.8, n_users)
    counts = min_per_user + np.round(activity / activity.mean() * (mean_per_user - min_per_user))
    counts = np.clip(counts, min_per_user, n_items - 1).astype(np.int64)

    users, items, ratings, stamps = [], [], [], []
    for u in range(n_users):
        chosen = rng.choice(n_items, size=counts[u], replace=False, p=pop)
        raw = 3.5 + U[u] @ V[chosen].T * 1.5 + bias[chosen] + rng.normal(0.0, noise, len(chosen))
        r = np.clip(np.rint(raw), 1, 5)
        t0 = int(rng.integers(9.5e8, 1.0e9))
        ts = t0 + np.sort(rng.integers(0, 10**7, len(chosen)))
        users.append(np.full(len(chosen), u + 1))
        items.append(chosen + 1)
        ratings.append(r)
        stamps.append(ts)
    return Dataset(np.concatenate(users), np.concatenate(items), np.concatenate(ratings),
                   np.concatenate(stamps))
