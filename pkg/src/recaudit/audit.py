"""User-agency audits: reachability and stability, past- and future-facing.

Builders here translate external ids into the dense-index objectives of
:mod:`recaudit.objectives` and :func:`run_audit` wires an objective to a
solver.

Data conventions:

* Past metrics edit the user's (or adversary's) last ``k`` interactions in
  ``dataset``; the model is expected to have been trained on
  ``dataset.holdout(k).train``, which is also where item raters are read from.
* Future metrics roll forward from the end of ``dataset``; the model is
  expected to have been trained on all of ``dataset``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import blackbox, distances
from .dataset import Dataset
from .distances import hellinger, l2_distance  # noqa: F401  (public re-export)
from .errors import ConfigError, PreconditionError, UnknownIdError
from .mf import DEFAULT_AUDIT_RIDGE, MfModel
from .objectives import (
    RATING_MAX,
    RATING_MIN,
    FutureReachability,
    FutureStability,
    PastReachability,
    PastStability,
)
from .optim import (
    GD,
    ORACLE,
    ZO,
    OptimizerConfig,
    analytic_gradient,
    extreme_point_oracle,
    projected_gradient_ascent,
    zeroth_order_gradient,
)
from .policy import softmax_probs


class Metric(str, Enum):
    PAST_REACH = "past-reach"
    FUTURE_REACH = "future-reach"
    PAST_STAB = "past-stab"
    FUTURE_STAB = "future-stab"

    @property
    def is_past(self) -> bool:
        return self in (Metric.PAST_REACH, Metric.PAST_STAB)

    @property
    def is_reach(self) -> bool:
        return self in (Metric.PAST_REACH, Metric.FUTURE_REACH)


@dataclass(frozen=True)
class RatingParams:
    mode: str
    values: np.ndarray

    def __post_init__(self):
        if self.mode not in ("past", "future"):
            raise ConfigError(f"unknown params mode {self.mode!r}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != (1 if self.mode == "past" else 2):
            raise ConfigError(f"{self.mode} params must be {'1' if self.mode == 'past' else '2'}-d")
        if np.any(vals < RATING_MIN) or np.any(vals > RATING_MAX):
            raise ConfigError("ratings must lie in [1, 5]")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class AuditSpec:
    """``user`` is the subject (reachability) or the target user i1
    (stability); ``item`` is the item to reach; ``adversary`` is i2."""

    metric: Metric
    k: int
    user: int
    item: int | None = None
    adversary: int | None = None
    beta: float = 1.0
    distance: str = distances.HELLINGER
    num_samples: int = 1
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    ridge: float = DEFAULT_AUDIT_RIDGE

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric(self.metric))
        if self.k < 1:
            raise ConfigError("horizon k must be >= 1")
        if self.beta <= 0:
            raise ConfigError("beta must be > 0")
        if self.num_samples < 1:
            raise ConfigError("num_samples must be >= 1")
        if self.metric.is_reach and self.item is None:
            raise ConfigError("reachability audits need a target item")
        if not self.metric.is_reach:
            if self.adversary is None:
                raise ConfigError("stability audits need an adversary")
            if self.adversary == self.user:
                raise ConfigError("target user and adversary must differ")
            if self.distance not in distances.DISTANCES:
                raise ConfigError(f"unknown distance {self.distance!r}")
        if self.optimizer.kind == ORACLE and self.metric is not Metric.PAST_STAB:
            raise ConfigError("the extreme-point oracle applies to past stability only")


@dataclass
class AuditResult:
    baseline: float
    optimized: float
    lift: float | None
    params_at_opt: RatingParams
    objective_trace: list[float]
    metadata: dict

    @property
    def instability(self) -> float:
        return self.optimized


# ------------------------------------------------------------------ building blocks


def _user_candidates(model: MfModel, rated_ids) -> np.ndarray:
    rated = {model.item_index[x] for x in map(int, rated_ids) if x in model.item_index}
    mask = np.ones(model.n_items, dtype=bool)
    mask[list(rated)] = False
    cands = np.flatnonzero(mask)
    if cands.size == 0:
        raise PreconditionError("user has rated every item")
    return cands


def _last_k(dataset: Dataset, user_id: int, k: int):
    items, ratings = dataset.user_history_ids(user_id)
    if len(items) < k + 1:
        raise PreconditionError(
            f"user {user_id} has {len(items)} interactions; past-{k} needs at least {k + 1}"
        )
    return items[:-k], ratings[:-k], items[-k:], ratings[-k:]


def _known_items(model: MfModel, items, what: str) -> np.ndarray:
    try:
        return model.item_indices(items)
    except UnknownIdError as exc:
        raise PreconditionError(f"{what}: {exc}") from None


def _rater_lookup(model: MfModel, train: Dataset, exclude_user: int):
    def lookup(item_idx: int):
        users, ratings = train.item_raters_ids(int(model.item_ids[item_idx]))
        keep = np.array([u != exclude_user and u in model.user_index for u in users.tolist()],
                        dtype=bool)
        users, ratings = users[keep], ratings[keep]
        return model.P[model.user_indices(users)].reshape(-1, model.dim), ratings
    return lookup


def baseline_reachability(model: MfModel, dataset: Dataset, user: int, item: int, beta: float) -> float:
    """Softmax probability of ``item`` for ``user`` under the current model."""
    rated, _ = dataset.user_history_ids(user)
    cands = _user_candidates(model, rated)
    j = model.iidx(item)
    pos = np.searchsorted(cands, j)
    if pos >= len(cands) or cands[pos] != j:
        raise PreconditionError(f"item {item} already rated by user {user}")
    probs = softmax_probs(model.Q[cands] @ model.P[model.uidx(user)], beta)
    return float(probs[pos])


def past_reachability_objective(model, dataset, user, item, k, beta, ridge=DEFAULT_AUDIT_RIDGE):
    hist, hist_r, edit, factual = _last_k(dataset, user, k)
    if int(item) in set(hist.tolist()) | set(edit.tolist()):
        raise PreconditionError(f"item {item} already rated by user {user}")
    h_idx = _known_items(model, hist, "history item")
    e_idx = _known_items(model, edit, "edited item")
    cands = _user_candidates(model, np.concatenate([hist, edit]))
    return PastReachability(model.Q, h_idx, hist_r, e_idx, factual, cands, model.iidx(item), beta, ridge)


def future_reachability_objective(model, dataset, user, item, k, beta, num_samples=1,
                                  ridge=DEFAULT_AUDIT_RIDGE):
    hist, hist_r = dataset.user_history_ids(user)
    if int(item) in set(hist.tolist()):
        raise PreconditionError(f"item {item} already rated by user {user}")
    h_idx = _known_items(model, hist, "history item")
    cands = _user_candidates(model, hist)
    return FutureReachability(model.Q, model.P[model.uidx(user)], h_idx, hist_r, cands,
                              model.iidx(item), beta, k, ridge, num_samples)


def past_stability_objective(model, dataset, target_user, adversary, k, beta,
                             distance=distances.HELLINGER, ridge=DEFAULT_AUDIT_RIDGE):
    if target_user == adversary:
        raise ConfigError("target user and adversary must differ")
    _, _, edit, factual = _last_k(dataset, adversary, k)
    e_idx = _known_items(model, edit, "edited item")
    rated, _ = dataset.holdout(k).train.user_history_ids(target_user)
    cands = _user_candidates(model, rated)
    train = dataset.holdout(k).train
    return PastStability(model.Q, model.P[model.uidx(target_user)], cands, model.P[model.uidx(adversary)],
                         e_idx, factual, _rater_lookup(model, train, adversary), beta, distance, ridge)


def future_stability_objective(model, dataset, target_user, adversary, k, beta,
                               distance=distances.HELLINGER, num_samples=1, ridge=DEFAULT_AUDIT_RIDGE):
    if target_user == adversary:
        raise ConfigError("target user and adversary must differ")
    rated1, _ = dataset.user_history_ids(target_user)
    rated2, _ = dataset.user_history_ids(adversary)
    return FutureStability(model.Q, model.P[model.uidx(target_user)], _user_candidates(model, rated1),
                           model.P[model.uidx(adversary)], _user_candidates(model, rated2),
                           _rater_lookup(model, dataset, adversary), beta, k, distance, ridge,
                           num_samples)


def build_objective(spec: AuditSpec, model: MfModel, dataset: Dataset):
    m = spec.metric
    if m is Metric.PAST_REACH:
        return past_reachability_objective(model, dataset, spec.user, spec.item, spec.k, spec.beta, spec.ridge)
    if m is Metric.FUTURE_REACH:
        return future_reachability_objective(model, dataset, spec.user, spec.item, spec.k, spec.beta,
                                             spec.num_samples, spec.ridge)
    if m is Metric.PAST_STAB:
        return past_stability_objective(model, dataset, spec.user, spec.adversary, spec.k, spec.beta,
                                        spec.distance, spec.ridge)
    return future_stability_objective(model, dataset, spec.user, spec.adversary, spec.k, spec.beta,
                                      spec.distance, spec.num_samples, spec.ridge)


def build_blackbox_objective(spec: AuditSpec, adapter, model: MfModel, dataset: Dataset):
    """Query-only counterpart of :func:`build_objective`."""
    m = spec.metric
    if m is Metric.PAST_REACH:
        _, _, edit, factual = _last_k(dataset, spec.user, spec.k)
        return blackbox.BlackBoxPastReachability(adapter, spec.user, spec.item, edit, factual, spec.beta)
    if m is Metric.PAST_STAB:
        _, _, edit, factual = _last_k(dataset, spec.adversary, spec.k)
        return blackbox.BlackBoxPastStability(adapter, spec.user, spec.adversary, edit, factual,
                                              spec.beta, spec.distance)
    if m is Metric.FUTURE_REACH:
        return blackbox.BlackBoxFutureReachability(adapter, spec.user, spec.item, spec.k, spec.beta,
                                                   model.item_ids)
    return blackbox.BlackBoxFutureStability(adapter, spec.user, spec.adversary, spec.k, spec.beta,
                                            model.item_ids, spec.distance)


def default_adapter(spec: AuditSpec, model: MfModel, dataset: Dataset):
    train = dataset.holdout(spec.k).train if spec.metric.is_past else dataset
    return blackbox.MfAdapter(model, train, spec.ridge)


# ----------------------------------------------------------------------- run


def run_audit(spec: AuditSpec, model: MfModel, dataset: Dataset, adapter=None) -> AuditResult:
    """Optimize one audit objective.

    Past metrics start from the factual ratings; future metrics from a table
    drawn uniformly from [1, 5] with the optimizer seed.  The white-box
    objective always provides the baseline; ``zo`` optimizes through the
    black-box adapter (the reference MF adapter unless one is given).
    """
    start = time.perf_counter()
    cfg = spec.optimizer
    objective = build_objective(spec, model, dataset)
    rng = np.random.default_rng(cfg.seed)
    if spec.metric.is_past:
        init = objective.factual.copy()
    else:
        init = rng.uniform(cfg.lo, cfg.hi, size=objective.shape)

    if spec.metric is Metric.PAST_REACH:
        baseline = objective(init)
    elif spec.metric is Metric.FUTURE_REACH:
        baseline = baseline_reachability(model, dataset, spec.user, spec.item, spec.beta)
    else:
        baseline = objective(init)

    lr = cfg.lr_for(objective.mode)
    if cfg.kind == ORACLE:
        theta, value = extreme_point_oracle(objective, spec.k, cfg.lo, cfg.hi)
        trace = [value]
    elif cfg.kind == GD:
        theta, trace = projected_gradient_ascent(
            objective, lambda th: analytic_gradient(objective, th), init, cfg, lr=lr
        )
    else:
        bb = build_blackbox_objective(spec, adapter or default_adapter(spec, model, dataset), model, dataset)
        theta, trace = projected_gradient_ascent(
            bb,
            lambda th: zeroth_order_gradient(bb, th, cfg.eps, cfg.num_z, rng, (cfg.lo, cfg.hi)),
            init,
            cfg,
            lr=lr,
        )
    optimized = float(objective(theta))
    lift = None
    if spec.metric.is_reach:
        lift = optimized / baseline if baseline > 0 else float("inf")
    meta = {
        "metric": spec.metric.value,
        "k": spec.k,
        "beta": spec.beta,
        "optimizer": cfg.kind,
        "epochs": cfg.epochs,
        "learning_rate": lr,
        "seed": cfg.seed,
        "eps": cfg.eps if cfg.kind == ZO else None,
        "num_z": cfg.num_z if cfg.kind == ZO else None,
        "distance": None if spec.metric.is_reach else spec.distance,
        "ridge": spec.ridge,
        "wall_ms": 1000.0 * (time.perf_counter() - start),
    }
    return AuditResult(
        baseline=float(baseline),
        optimized=optimized,
        lift=lift,
        params_at_opt=RatingParams(objective.mode, theta),
        objective_trace=[float(v) for v in trace],
        metadata=meta,
    )
