"""Query-only access to a recommender.

An adapter answers :class:`BlackBoxQuery` requests ("what would you show
``subject_user`` if these ratings were edited?") with a distribution over the
subject's unrated candidates.  Audits that only have this surface are driven
by the zeroth-order optimizer through the objective wrappers at the bottom.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import distances
from .dataset import Dataset
from .errors import ConfigError, DataError, EmptyCandidatesError, NumericalError
from .mf import DEFAULT_AUDIT_RIDGE, MfModel, update_item_vector, update_user_vector
from .policy import (
    PolicyKind,
    RecommendationDistribution,
    RecPolicy,
    point_mass,
    softmax_distribution,
    top_one,
)

AUTO, USER, ITEM = "auto", "user", "item"


@dataclass(frozen=True)
class BlackBoxQuery:
    """``edits`` are (editing_user, item, rating) triples in external ids.

    ``update`` says which side of the model absorbs the edits: ``auto`` refits
    the subject's vector for the subject's own edits and item vectors for
    everyone else's; ``item`` always refits item vectors; ``user`` only
    accepts the subject's own edits.
    """

    subject_user: int
    edits: tuple = field(default_factory=tuple)
    policy: RecPolicy = field(default_factory=RecPolicy.top_one)
    update: str = AUTO

    def __post_init__(self):
        object.__setattr__(self, "edits", tuple((int(u), int(i), float(r)) for u, i, r in self.edits))
        for _, _, r in self.edits:
            if not 1.0 <= r <= 5.0:
                raise ConfigError(f"edited rating {r} outside [1, 5]")
        if self.update not in (AUTO, USER, ITEM):
            raise ConfigError(f"unknown update mode {self.update!r}")


class RecommenderAdapter(Protocol):
    def query(self, query: BlackBoxQuery) -> RecommendationDistribution: ...


class MfAdapter:
    """Reference adapter over a trained MF model and the data it was fit on.

    Edits that reproduce a rating already in ``train`` change nothing and are
    dropped; an empty effective edit list returns the model's own
    distribution.  Returned item ids are external ids, ascending.
    """

    def __init__(self, model: MfModel, train: Dataset, ridge: float = DEFAULT_AUDIT_RIDGE):
        self.model = model
        self.train = train
        self.ridge = ridge
        self.n_queries = 0

    def _user_history(self, user_id):
        if int(user_id) not in self.train.user_index:
            return {}
        items, ratings = self.train.user_history_ids(user_id)
        return dict(zip(items.tolist(), ratings.tolist()))

    def _item_raters(self, item_id):
        users, ratings = self.train.item_raters_ids(item_id)
        return dict(zip(users.tolist(), ratings.tolist()))

    def query(self, query: BlackBoxQuery) -> RecommendationDistribution:
        self.n_queries += 1
        m = self.model
        subject = query.subject_user
        s_idx = m.uidx(subject)
        history = self._user_history(subject)
        for _, item, _ in query.edits:
            m.iidx(item)

        own, other = [], []
        for u, item, r in query.edits:
            if u == subject and query.update != ITEM:
                own.append((item, r))
            else:
                if query.update == USER:
                    raise ConfigError("update='user' accepts only the subject's own edits")
                other.append((u, item, r))

        rated = set(history)
        rated.update(item for u, item, _ in query.edits if u == subject)

        p = m.P[s_idx]
        changed_own = {i: r for i, r in own if history.get(i) != r}
        if changed_own:
            merged = dict(history)
            merged.update(changed_own)
            items = sorted(merged)
            p = update_user_vector(m.Q[m.item_indices(items)], [merged[i] for i in items], self.ridge)

        new_vectors: dict[int, np.ndarray] = {}
        by_item: dict[int, dict[int, float]] = {}
        for u, item, r in other:
            by_item.setdefault(item, {})[u] = r
        for item, edits in by_item.items():
            raters = self._item_raters(item)
            if all(raters.get(u) == r for u, r in edits.items()):
                continue
            raters.update(edits)
            users = sorted(raters)
            new_vectors[item] = update_item_vector(
                m.P[m.user_indices(users)], [raters[u] for u in users], self.ridge
            )

        cand_ids = np.array([x for x in m.item_ids.tolist() if x not in rated], dtype=np.int64)
        if len(cand_ids) == 0:
            raise EmptyCandidatesError(f"user {subject} has no unrated items")
        Qc = m.Q[m.item_indices(cand_ids)]
        if new_vectors:
            Qc = Qc.copy()
            for item, vec in new_vectors.items():
                k = np.searchsorted(cand_ids, item)
                if k < len(cand_ids) and cand_ids[k] == item:
                    Qc[k] = vec
        scores = Qc @ p
        if query.policy.kind is PolicyKind.SOFTMAX:
            return softmax_distribution(scores, query.policy.beta, cand_ids)
        return point_mass(cand_ids, top_one(scores, cand_ids))


def blackbox_query(adapter: RecommenderAdapter, query: BlackBoxQuery) -> RecommendationDistribution:
    """Run one query and check that a valid distribution came back."""
    dist = adapter.query(query)
    probs = np.asarray(dist.probs, dtype=np.float64)
    if probs.ndim != 1 or len(probs) != len(dist.items):
        raise DataError("adapter returned misaligned items and probabilities")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise NumericalError("adapter returned an invalid probability vector")
    return dist


# ------------------------------------------------------------------ objectives


class BlackBoxPastReachability:
    mode = "past"

    def __init__(self, adapter, user, target, edit_items, factual, beta):
        self.adapter = adapter
        self.user = int(user)
        self.target = int(target)
        self.edit_items = [int(x) for x in edit_items]
        self.factual = np.asarray(factual, dtype=np.float64)
        self.shape = (len(self.edit_items),)
        self.policy = RecPolicy.softmax(beta)

    def __call__(self, theta) -> float:
        edits = [(self.user, m, float(r)) for m, r in zip(self.edit_items, theta)]
        dist = blackbox_query(self.adapter, BlackBoxQuery(self.user, edits, self.policy))
        return dist.prob(self.target)


class BlackBoxPastStability:
    mode = "past"

    def __init__(self, adapter, target_user, adversary, edit_items, factual, beta,
                 distance=distances.HELLINGER):
        self.adapter = adapter
        self.target_user = int(target_user)
        self.adversary = int(adversary)
        self.edit_items = [int(x) for x in edit_items]
        self.factual = np.asarray(factual, dtype=np.float64)
        self.shape = (len(self.edit_items),)
        self.policy = RecPolicy.softmax(beta)
        self.distance = distance
        self.reference = self._dist(self.factual)

    def _dist(self, theta):
        edits = [(self.adversary, m, float(r)) for m, r in zip(self.edit_items, theta)]
        return blackbox_query(self.adapter, BlackBoxQuery(self.target_user, edits, self.policy))

    def __call__(self, theta) -> float:
        return distances.distance(self.distance, self._dist(theta), self.reference)


class BlackBoxFutureReachability:
    """Top-1 rollout realized through queries; the target is never taken as a step."""

    mode = "future"

    def __init__(self, adapter, user, target, k, beta, item_ids):
        self.adapter = adapter
        self.user = int(user)
        self.target = int(target)
        self.k = int(k)
        self.item_ids = np.asarray(item_ids)
        self.shape = (self.k, len(self.item_ids))
        self.policy = RecPolicy.softmax(beta)

    def __call__(self, theta) -> float:
        theta = np.asarray(theta)
        edits: list = []
        for step in range(self.k):
            dist = blackbox_query(self.adapter, BlackBoxQuery(self.user, edits, self.policy))
            probs = np.where(dist.items == self.target, -1.0, dist.probs)
            if len(probs) < 2:
                raise EmptyCandidatesError(f"candidates exhausted at rollout step {step + 1}")
            m = int(dist.items[int(np.argmax(probs))])
            col = int(np.searchsorted(self.item_ids, m))
            edits.append((self.user, m, float(theta[step, col])))
        dist = blackbox_query(self.adapter, BlackBoxQuery(self.user, edits, self.policy))
        return dist.prob(self.target)


class BlackBoxFutureStability:
    mode = "future"

    def __init__(self, adapter, target_user, adversary, k, beta, item_ids,
                 distance=distances.HELLINGER):
        self.adapter = adapter
        self.target_user = int(target_user)
        self.adversary = int(adversary)
        self.k = int(k)
        self.item_ids = np.asarray(item_ids)
        self.shape = (self.k, len(self.item_ids))
        self.policy = RecPolicy.softmax(beta)
        self.distance = distance
        self.reference = blackbox_query(adapter, BlackBoxQuery(self.target_user, (), self.policy))

    def __call__(self, theta) -> float:
        theta = np.asarray(theta)
        edits: list = []
        for step in range(self.k):
            dist = blackbox_query(
                self.adapter,
                BlackBoxQuery(self.adversary, edits, RecPolicy.top_one(), update=ITEM),
            )
            m = int(dist.items[int(np.argmax(dist.probs))])
            col = int(np.searchsorted(self.item_ids, m))
            edits.append((self.adversary, m, float(theta[step, col])))
        dist = blackbox_query(self.adapter, BlackBoxQuery(self.target_user, edits, self.policy))
        return distances.distance(self.distance, dist, self.reference)
