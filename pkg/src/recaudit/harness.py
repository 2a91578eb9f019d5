"""Experiment protocols: sweeps over sampled pairs, optimizer comparisons and
popularity/activity group studies, with CSV and summary output.

Sampling is driven by one master seed.  Every random choice uses its own
stream ``SeedSequence([seed, STREAM, ...])`` and pair ``n`` of a sweep gets
optimizer seed ``SeedSequence([seed, PAIR_STREAM, n]).generate_state(1)[0]``,
so any subset of pairs can be rerun in isolation with identical results.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from multiprocessing import get_context
from typing import Iterable, Sequence

import numpy as np

from .audit import AuditSpec, Metric, run_audit
from .dataset import Dataset, activity_rank, load_movielens, popularity_rank
from .errors import ConfigError, DataError, PreconditionError, UnknownIdError
from .mf import MfConfig, MfModel, train_mf
from .optim import GD, ORACLE, ZO, OptimizerConfig

log = logging.getLogger(__name__)

CSV_HEADER = (
    "experiment", "metric", "k", "beta", "user", "counterpart", "baseline",
    "optimized", "lift_or_instability", "epochs", "seed", "wall_ms",
)
SUMMARY_HEADER = ("experiment", "metric", "k", "beta", "count", "mean", "stderr", "ci_low", "ci_high")

EXPERIMENTS = ("reach-sweep", "stab-sweep", "beta-sweep", "optimizer-compare", "group-reach", "group-stab")
BETA_GRID = (0.2, 0.5, 0.8, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
Z95 = 1.959963984540054

# sub-stream tags for SeedSequence([seed, tag, ...])
_USERS, _ITEMS, _PAIRS, _BAND, _PAIR_SEED = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "reach-sweep"
    data: str | None = None
    metric: str = "past-reach"
    ks: tuple[int, ...] = (5,)
    betas: tuple[float, ...] = (1.0,)
    user_frac: float = 0.1
    item_frac: float = 0.1
    max_pairs: int | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    distance: str = "hellinger"
    seed: int = 0
    out: str | None = None
    mf: MfConfig = field(default_factory=lambda: MfConfig(dim=16, reg=1.0, epochs=15))
    group_size: int = 30
    band: tuple[int, int] = (200, 300)
    timing: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        Metric(self.metric)
        object.__setattr__(self, "ks", tuple(int(k) for k in self.ks))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if not self.ks or not self.betas:
            raise ConfigError("k and beta lists must be non-empty")
        if any(k < 1 for k in self.ks):
            raise ConfigError("every k must be >= 1")
        if any(b <= 0 for b in self.betas):
            raise ConfigError("every beta must be > 0")
        for name in ("user_frac", "item_frac"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must be in (0, 1]")
        if self.max_pairs is not None and self.max_pairs < 1:
            raise ConfigError("max_pairs must be >= 1")
        if self.group_size < 1 or not 1 <= self.band[0] <= self.band[1]:
            raise ConfigError("need group_size >= 1 and a rank band 1 <= lo <= hi")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.distance not in ("l2", "hellinger"):
            raise ConfigError(f"unknown distance {self.distance!r}")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    metric: str
    k: int
    beta: float
    user: int
    counterpart: int
    baseline: float
    optimized: float
    lift_or_instability: float
    epochs: int
    seed: int
    wall_ms: float | None = None

    def __post_init__(self):
        for name in ("baseline", "optimized", "lift_or_instability"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} is not finite")


@dataclass(frozen=True)
class Skip:
    experiment: str
    k: int
    beta: float
    user: int
    counterpart: int
    reason: str


# ---------------------------------------------------------------- context


class Harness:
    """Dataset plus lazily trained models: one per holdout depth for past
    metrics, one on the full data for future metrics."""

    def __init__(self, config: ExperimentConfig, dataset: Dataset | None = None):
        self.config = config
        if dataset is None:
            if config.data is None:
                raise ConfigError("no dataset given")
            dataset = load_movielens(config.data)
        if dataset.n_ratings == 0:
            raise DataError("dataset is empty")
        self.dataset = dataset
        self._models: dict = {}
        self.skips: list[Skip] = []

    def model(self, metric: Metric, k: int) -> MfModel:
        key = k if metric.is_past else None
        if key not in self._models:
            data = self.dataset.holdout(k).train if metric.is_past else self.dataset
            self._models[key] = train_mf(data, self.config.mf)
        return self._models[key]

    def rng(self, *tags) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.config.seed, *tags]))


def pair_seed(master: int, n: int) -> int:
    return int(np.random.SeedSequence([master, _PAIR_SEED, n]).generate_state(1)[0])


def _sample(ids: np.ndarray, frac: float, rng: np.random.Generator) -> np.ndarray:
    n = max(1, int(round(frac * len(ids))))
    return np.sort(rng.choice(ids, size=n, replace=False))


def _cap(pairs: list, cfg: ExperimentConfig, rng: np.random.Generator) -> list:
    if cfg.max_pairs is None or len(pairs) <= cfg.max_pairs:
        return pairs
    keep = np.sort(rng.choice(len(pairs), size=cfg.max_pairs, replace=False))
    return [pairs[i] for i in keep]


def reach_pairs(h: Harness) -> list[tuple[int, int]]:
    cfg, ds = h.config, h.dataset
    users = _sample(ds.user_ids, cfg.user_frac, h.rng(_USERS))
    items = _sample(ds.item_ids, cfg.item_frac, h.rng(_ITEMS))
    pairs = [(int(u), int(i)) for u in users for i in items]
    return _cap(pairs, cfg, h.rng(_PAIRS))


def stab_pairs(h: Harness) -> list[tuple[int, int]]:
    """Sampled users split in half: targets first, adversaries second."""
    cfg, ds = h.config, h.dataset
    rng = h.rng(_USERS)
    users = rng.permutation(_sample(ds.user_ids, cfg.user_frac, rng))
    if len(users) < 2:
        raise ConfigError("stability sweeps need at least two sampled users")
    half = len(users) // 2
    targets, adversaries = np.sort(users[:half]), np.sort(users[half: 2 * half])
    pairs = [(int(a), int(b)) for a in targets for b in adversaries]
    return _cap(pairs, cfg, h.rng(_PAIRS))


# ------------------------------------------------------------------ audits

_WORKER: Harness | None = None


def _audit_task(task):
    h = _WORKER
    experiment, metric, k, beta, user, counterpart, seed, opt = task
    cfg = h.config
    m = Metric(metric)
    spec = AuditSpec(
        metric=m, k=k, user=user, beta=beta,
        item=counterpart if m.is_reach else None,
        adversary=None if m.is_reach else counterpart,
        distance=cfg.distance,
        optimizer=replace(opt, seed=seed),
    )
    try:
        res = run_audit(spec, h.model(m, k), h.dataset)
    except (PreconditionError, UnknownIdError) as exc:
        return Skip(experiment, k, beta, user, counterpart, str(exc))
    value = res.lift if m.is_reach else res.optimized
    if not all(math.isfinite(v) for v in (res.baseline, res.optimized, value)):
        return Skip(experiment, k, beta, user, counterpart, "non-finite baseline or lift")
    return ResultRow(
        experiment=experiment, metric=metric, k=k, beta=beta, user=user, counterpart=counterpart,
        baseline=res.baseline, optimized=res.optimized, lift_or_instability=value,
        epochs=0 if opt.kind == ORACLE else opt.epochs, seed=seed,
        wall_ms=res.metadata["wall_ms"] if cfg.timing else None,
    )


def _execute(h: Harness, tasks: list) -> list[ResultRow]:
    global _WORKER
    _WORKER = h
    for metric, k in {(t[1], t[2]) for t in tasks}:
        h.model(Metric(metric), k)  # train before forking so workers share the models
    if h.config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(h.config.workers, mp_context=get_context("fork")) as pool:
            results = list(pool.map(_audit_task, tasks, chunksize=4))
    else:
        results = [_audit_task(t) for t in tasks]
    rows = []
    for r in results:
        if isinstance(r, Skip):
            log.info("skip %s k=%d beta=%g pair=(%d, %d): %s",
                     r.experiment, r.k, r.beta, r.user, r.counterpart, r.reason)
            h.skips.append(r)
        else:
            rows.append(r)
    return rows


def _sweep_tasks(h: Harness, experiment: str, pairs, metric: str, opt: OptimizerConfig,
                 ks=None, betas=None) -> list:
    cfg = h.config
    tasks = []
    for k in ks or cfg.ks:
        for beta in betas or cfg.betas:
            for n, (a, b) in enumerate(pairs):
                tasks.append((experiment, metric, k, beta, a, b, pair_seed(cfg.seed, n), opt))
    return tasks


def _harness(config, dataset):
    return config if isinstance(config, Harness) else Harness(config, dataset)


def run_reach_sweep(config, dataset: Dataset | None = None) -> list[ResultRow]:
    h = _harness(config, dataset)
    metric = Metric(h.config.metric)
    if not metric.is_reach:
        raise ConfigError("reach-sweep needs a reachability metric")
    return _execute(h, _sweep_tasks(h, "reach-sweep", reach_pairs(h), metric.value, h.config.optimizer))


def run_stab_sweep(config, dataset: Dataset | None = None, experiment: str = "stab-sweep") -> list[ResultRow]:
    h = _harness(config, dataset)
    metric = Metric(h.config.metric)
    if metric.is_reach:
        raise ConfigError(f"{experiment} needs a stability metric")
    return _execute(h, _sweep_tasks(h, experiment, stab_pairs(h), metric.value, h.config.optimizer))


def run_beta_sweep(config, dataset: Dataset | None = None) -> list[ResultRow]:
    """Sweep over ``config.betas`` (use :data:`BETA_GRID` for the full grid)
    for either metric family."""
    h = _harness(config, dataset)
    metric = Metric(h.config.metric)
    pairs = reach_pairs(h) if metric.is_reach else stab_pairs(h)
    return _execute(h, _sweep_tasks(h, "beta-sweep", pairs, metric.value, h.config.optimizer))


def optimizers_for(metric: Metric) -> tuple[str, ...]:
    return (GD, ZO, ORACLE) if metric is Metric.PAST_STAB else (GD, ZO)


def run_optimizer_compare(config, dataset: Dataset | None = None) -> list[ResultRow]:
    """The same pairs audited by every applicable optimizer; the optimizer is
    recorded in the experiment column as ``optimizer-compare/<kind>``."""
    h = _harness(config, dataset)
    metric = Metric(h.config.metric)
    pairs = reach_pairs(h) if metric.is_reach else stab_pairs(h)
    tasks = []
    for kind in optimizers_for(metric):
        opt = replace(h.config.optimizer, kind=kind)
        tasks += _sweep_tasks(h, f"optimizer-compare/{kind}", pairs, metric.value, opt)
    return _execute(h, tasks)


def group_members(h: Harness, ranked: Sequence[int]) -> tuple[list[int], list[int]]:
    """Top ``group_size`` of ``ranked`` and a sample of ``group_size`` from the
    1-based rank band ``band`` (inclusive)."""
    cfg = h.config
    top = [int(x) for x in ranked[: cfg.group_size]]
    lo, hi = cfg.band
    band = np.asarray(ranked[lo - 1: hi], dtype=np.int64)
    if len(band) < cfg.group_size:
        raise ConfigError(
            f"rank band {lo}-{hi} holds {len(band)} ids; need {cfg.group_size}"
        )
    mid = np.sort(h.rng(_BAND).choice(band, size=cfg.group_size, replace=False))
    return top, [int(x) for x in mid]


def run_group_experiment(config, dataset: Dataset | None = None, kind: str | None = None) -> list[ResultRow]:
    """Popular vs intermediate target items (``reach``) or active vs
    intermediate adversaries (``stab``), each against a random counterpart
    set of ``user_frac`` of the users."""
    h = _harness(config, dataset)
    cfg = h.config
    kind = kind or ("reach" if cfg.experiment == "group-reach" else "stab")
    metric = Metric(cfg.metric)
    if (kind == "reach") != metric.is_reach:
        raise ConfigError(f"group-{kind} needs a {'reachability' if kind == 'reach' else 'stability'} metric")
    ranking_data = h.dataset.holdout(max(cfg.ks)).train if metric.is_past else h.dataset
    tasks = []
    if kind == "reach":
        a, b = group_members(h, popularity_rank(ranking_data))
        users = _sample(h.dataset.user_ids, cfg.user_frac, h.rng(_USERS))
        groups = (("popular", a), ("intermediate", b))
        for name, members in groups:
            pairs = [(int(u), i) for u in users for i in members]
            tasks += _sweep_tasks(h, f"group-reach/{name}", pairs, metric.value, cfg.optimizer)
    else:
        a, b = group_members(h, activity_rank(ranking_data))
        pool = np.setdiff1d(h.dataset.user_ids, np.array(a + b, dtype=np.int64))
        targets = _sample(pool, cfg.user_frac, h.rng(_USERS))
        for name, members in (("active", a), ("intermediate", b)):
            pairs = [(int(t), adv) for t in targets for adv in members]
            tasks += _sweep_tasks(h, f"group-stab/{name}", pairs, metric.value, cfg.optimizer)
    return _execute(h, tasks)


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None) -> tuple[list[ResultRow], Harness]:
    h = Harness(config, dataset)
    e = config.experiment
    if e == "reach-sweep":
        rows = run_reach_sweep(h)
    elif e == "stab-sweep":
        rows = run_stab_sweep(h)
    elif e == "beta-sweep":
        rows = run_beta_sweep(h)
    elif e == "optimizer-compare":
        rows = run_optimizer_compare(h)
    else:
        rows = run_group_experiment(h)
    return rows, h


# ------------------------------------------------------------------ output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(rows: Iterable[ResultRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(getattr(r, f)) for f in CSV_HEADER])


def emit_csv(rows: Iterable[ResultRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_rows(rows, fh)


def read_csv(path) -> list[ResultRow]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise DataError(f"{path}: unexpected header {header}")
        for rec in reader:
            d = dict(zip(CSV_HEADER, rec))
            out.append(ResultRow(
                experiment=d["experiment"], metric=d["metric"], k=int(d["k"]), beta=float(d["beta"]),
                user=int(d["user"]), counterpart=int(d["counterpart"]), baseline=float(d["baseline"]),
                optimized=float(d["optimized"]), lift_or_instability=float(d["lift_or_instability"]),
                epochs=int(d["epochs"]), seed=int(d["seed"]),
                wall_ms=float(d["wall_ms"]) if d["wall_ms"] else None,
            ))
    return out


def mean_ci(values: Sequence[float]) -> dict:
    """Mean, standard error and normal-approximation 95% interval.  Standard
    error and interval are ``None`` for fewer than two values."""
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    if n == 0:
        return {"count": 0, "mean": None, "stderr": None, "ci_low": None, "ci_high": None}
    mean = float(x.mean())
    if n < 2:
        return {"count": 1, "mean": mean, "stderr": None, "ci_low": None, "ci_high": None}
    se = float(x.std(ddof=1) / math.sqrt(n))
    return {"count": n, "mean": mean, "stderr": se, "ci_low": mean - Z95 * se, "ci_high": mean + Z95 * se}


def emit_summary(rows: Iterable[ResultRow], path=None) -> list[dict]:
    """Per (experiment, metric, k, beta) statistics of ``lift_or_instability``,
    in first-appearance order."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.experiment, r.metric, r.k, r.beta), []).append(r.lift_or_instability)
    out = []
    for (e, m, k, b), vals in groups.items():
        out.append({"experiment": e, "metric": m, "k": k, "beta": b, **mean_ci(vals)})
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_HEADER)
            for s in out:
                w.writerow([_fmt(s[c]) for c in SUMMARY_HEADER])
    return out


def emit_skips(skips: Iterable[Skip], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f.name for f in fields(Skip)])
        for s in skips:
            w.writerow([_fmt(getattr(s, f.name)) for f in fields(Skip)])


def config_record(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["ks"], d["betas"], d["band"] = list(config.ks), list(config.betas), list(config.band)
    return d


def write_outputs(rows: list[ResultRow], h: Harness, out_dir, wall_s: float | None = None) -> None:
    """``results.csv``, ``summary.csv``, ``skipped.csv`` and ``metadata.json``."""
    os.makedirs(out_dir, exist_ok=True)
    emit_csv(rows, os.path.join(out_dir, "results.csv"))
    emit_summary(rows, os.path.join(out_dir, "summary.csv"))
    emit_skips(h.skips, os.path.join(out_dir, "skipped.csv"))
    meta = {
        "config": config_record(h.config),
        "rows": len(rows),
        "skipped": len(h.skips),
        "dataset": {"users": h.dataset.n_users, "items": h.dataset.n_items, "ratings": h.dataset.n_ratings},
    }
    if h.config.timing and wall_s is not None:
        meta["wall_s"] = wall_s
    with open(os.path.join(out_dir, "metadata.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_and_write(config: ExperimentConfig, dataset: Dataset | None = None) -> list[ResultRow]:
    start = time.perf_counter()
    rows, h = run_experiment(config, dataset)
    if config.out:
        write_outputs(rows, h, config.out, time.perf_counter() - start)
    return rows
