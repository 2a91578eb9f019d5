import os

import numpy as np
import pytest

from recaudit.dataset import Dataset
from recaudit.mf import MfConfig, train_mf

ACCEPTANCE: list[tuple[str, str, str]] = []


def record(criterion: str, status: str, detail: str = "") -> None:
    """Log one acceptance line; status is PASS, FAIL or SKIP."""
    ACCEPTANCE.append((criterion, status, detail))
    print(f"[{status}] {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, status, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{status:4s}  {criterion}  {detail}")


def random_dataset(rng, n_users=20, n_items=30, per_user=(8, 16)) -> Dataset:
    users, items, ratings, stamps = [], [], [], []
    for u in range(1, n_users + 1):
        n = int(rng.integers(per_user[0], per_user[1] + 1))
        chosen = rng.choice(n_items, size=n, replace=False) + 1
        users += [u] * n
        items += chosen.tolist()
        ratings += rng.integers(1, 6, size=n).tolist()
        stamps += sorted(rng.integers(0, 10**6, size=n).tolist())
    return Dataset(users, items, ratings, stamps)


class Toy:
    """Random small rating log with models for past (holdout) and future use."""

    def __init__(self, seed, k=3, n_users=20, n_items=30, dim=4):
        rng = np.random.default_rng(seed)
        self.rng = rng
        self.k = k
        self.data = random_dataset(rng, n_users, n_items)
        cfg = MfConfig(dim=dim, reg=0.5, epochs=8, seed=seed)
        self.past = train_mf(self.data.holdout(k).train, cfg)
        self.full = train_mf(self.data, cfg)

    def unrated_item(self, user, model):
        rated = set(self.data.user_history_ids(user)[0].tolist())
        choices = [int(x) for x in model.item_ids if int(x) not in rated]
        return int(self.rng.choice(choices))

    def user_pair(self):
        a, b = self.rng.choice(self.data.user_ids, size=2, replace=False)
        return int(a), int(b)


@pytest.fixture(scope="session")
def toy_factory():
    cache = {}

    def make(seed, k=3, **kw):
        key = (seed, k, tuple(sorted(kw.items())))
        if key not in cache:
            cache[key] = Toy(seed, k, **kw)
        return cache[key]

    return make


@pytest.fixture(scope="session")
def ml1m_path():
    path = os.environ.get("RECAUDIT_ML1M")
    if not path or not os.path.exists(path):
        if os.environ.get("RECAUDIT_REQUIRE_ML1M") == "1":
            pytest.fail("RECAUDIT_REQUIRE_ML1M=1 but RECAUDIT_ML1M does not point at ratings.dat")
        pytest.skip("ML-1M ratings.dat not available (set RECAUDIT_ML1M=/path/to/ratings.dat)")
    return path
