"""Matrix-factorization recommender and its closed-form single-entity updates.

Training minimizes ``sum_obs (r_ui - p_u . q_i)^2 + reg (|P|^2 + |Q|^2)`` by
alternating ridge least squares: every half-sweep solves each row's normal
equations exactly, so the loss cannot increase.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import kernels
from .dataset import Dataset
from .errors import (
    ConfigError,
    DataError,
    SingularSystemError,
    TrainingDivergedError,
    UnknownIdError,
)

CHECKPOINT_HEADER = "recaudit-mf-v1"
# Cholesky pivot spread above which a ridge system is treated as singular.
MAX_CONDITION = 1e12
DEFAULT_AUDIT_RIDGE = 1e-6


@dataclass(frozen=True)
class MfConfig:
    dim: int = 100
    reg: float = 0.1
    epochs: int = 20
    seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.reg < 0:
            raise ConfigError("reg must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")


@dataclass
class MfModel:
    P: np.ndarray
    Q: np.ndarray
    config: MfConfig
    user_ids: np.ndarray
    item_ids: np.ndarray
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.P = np.ascontiguousarray(self.P, dtype=np.float64)
        self.Q = np.ascontiguousarray(self.Q, dtype=np.float64)
        if self.P.shape[0] != len(self.user_ids) or self.Q.shape[0] != len(self.item_ids):
            raise ValueError("factor rows do not match id maps")
        if self.P.shape[1] != self.Q.shape[1]:
            raise ValueError("user and item factors differ in dimension")
        if not (np.all(np.isfinite(self.P)) and np.all(np.isfinite(self.Q))):
            raise TrainingDivergedError("non-finite factor entries")
        self.user_index = {int(x): k for k, x in enumerate(self.user_ids)}
        self.item_index = {int(x): k for k, x in enumerate(self.item_ids)}

    @property
    def n_users(self) -> int:
        return self.P.shape[0]

    @property
    def n_items(self) -> int:
        return self.Q.shape[0]

    @property
    def dim(self) -> int:
        return self.P.shape[1]

    def uidx(self, user_id: int) -> int:
        try:
            return self.user_index[int(user_id)]
        except KeyError:
            raise UnknownIdError(f"user {user_id} not in model") from None

    def iidx(self, item_id: int) -> int:
        try:
            return self.item_index[int(item_id)]
        except KeyError:
            raise UnknownIdError(f"item {item_id} not in model") from None

    def item_indices(self, item_ids) -> np.ndarray:
        return np.array([self.iidx(x) for x in item_ids], dtype=np.int64)

    def user_indices(self, user_ids) -> np.ndarray:
        return np.array([self.uidx(x) for x in user_ids], dtype=np.int64)

    def predict(self, user_id: int, item_id: int) -> float:
        return score(self, self.uidx(user_id), self.iidx(item_id))


def score(model: MfModel, i: int, j: int) -> float:
    """Predicted rating ``P_i . Q_j`` for dense indices."""
    if not (0 <= i < model.n_users and 0 <= j < model.n_items):
        raise IndexError(f"index ({i}, {j}) outside ({model.n_users}, {model.n_items})")
    return float(model.P[i] @ model.Q[j])


def _csr(major: np.ndarray, minor: np.ndarray, values: np.ndarray, n_major: int):
    order = np.lexsort((minor, major))
    indptr = np.zeros(n_major + 1, dtype=np.int64)
    np.cumsum(np.bincount(major, minlength=n_major), out=indptr[1:])
    return indptr, minor[order].astype(np.int64), values[order]


def regularized_loss(P, Q, u, i, r, reg) -> float:
    sq = kernels.squared_error(u, i, r, P, Q)
    return sq + reg * (float(np.sum(P * P)) + float(np.sum(Q * Q)))


def train_mf(train: Dataset, config: MfConfig = MfConfig()) -> MfModel:
    """Fit user/item factors by alternating ridge least squares.

    Deterministic for a given seed and kernel backend.  ``loss_history`` holds
    the regularized loss after each epoch.
    """
    if train.n_ratings == 0:
        raise DataError("cannot train on an empty dataset")
    rng = np.random.default_rng(config.seed)
    n, m, d = train.n_users, train.n_items, config.dim
    P = np.zeros((n, d))
    Q = np.ascontiguousarray(rng.normal(0.0, config.init_scale, size=(m, d)))
    by_user = _csr(train.u, train.i, train.ratings, n)
    by_item = _csr(train.i, train.u, train.ratings, m)

    history: list[float] = []
    for epoch in range(config.epochs):
        kernels.als_half_sweep(*by_user, Q, config.reg, P)
        kernels.als_half_sweep(*by_item, P, config.reg, Q)
        loss = regularized_loss(P, Q, train.u, train.i, train.ratings, config.reg)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
        if history and loss > history[-1] * (1 + 1e-9) + 1e-9:
            raise TrainingDivergedError(
                f"loss increased at epoch {epoch}: {history[-1]!r} -> {loss!r}"
            )
        history.append(loss)
    return MfModel(P, Q, config, train.user_ids.copy(), train.item_ids.copy(), history)


def rmse(model: MfModel, data: Dataset) -> float:
    """RMSE over the interactions whose user and item are both known to the model."""
    u = np.array([model.user_index.get(int(x), -1) for x in data.users_ext], dtype=np.int64)
    i = np.array([model.item_index.get(int(x), -1) for x in data.items_ext], dtype=np.int64)
    ok = (u >= 0) & (i >= 0)
    if not ok.any():
        raise DataError("no overlapping (user, item) pairs")
    sq = kernels.squared_error(u[ok], i[ok], data.ratings[ok], model.P, model.Q)
    return float(np.sqrt(sq / ok.sum()))


class RidgeSolver:
    """Factorized ``X^T X + ridge I`` for repeated solves against new targets.

    ``solve(y)`` returns ``argmin_w |X w - y|^2 + ridge |w|^2``.  Explicit
    inverses are never formed.
    """

    def __init__(self, X: np.ndarray, ridge: float = DEFAULT_AUDIT_RIDGE):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[0] < 1:
            raise ConfigError("at least one rated row is required")
        if ridge < 0:
            raise ConfigError("ridge must be >= 0")
        self.X = X
        self.ridge = ridge
        gram = X.T @ X
        gram[np.diag_indices_from(gram)] += ridge
        self._factor = factor_spd(gram)

    @classmethod
    def from_gram(cls, gram: np.ndarray) -> "RidgeSolver":
        obj = cls.__new__(cls)
        obj.X = None
        obj.ridge = None
        obj._factor = factor_spd(gram)
        return obj

    def solve(self, y: np.ndarray) -> np.ndarray:
        return self.apply_inverse(self.X.T @ np.asarray(y, dtype=np.float64))

    def apply_inverse(self, b: np.ndarray) -> np.ndarray:
        return cho_solve(self._factor, b, check_finite=False)


def factor_spd(gram: np.ndarray):
    try:
        factor = cho_factor(gram, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise SingularSystemError(
            f"normal matrix is singular ({exc}); use a positive ridge"
        ) from None
    piv = np.abs(np.diag(factor[0]))
    if piv.min() <= 0 or (piv.max() / piv.min()) ** 2 > MAX_CONDITION:
        raise SingularSystemError("normal matrix is numerically singular; use a positive ridge")
    return factor


def update_user_vector(Q_rated, R_rated, ridge: float = DEFAULT_AUDIT_RIDGE) -> np.ndarray:
    """Refit one user's vector against fixed item vectors of the items they rated."""
    return RidgeSolver(Q_rated, ridge).solve(R_rated)


def update_item_vector(P_rated, R_rated, ridge: float = DEFAULT_AUDIT_RIDGE) -> np.ndarray:
    """Refit one item's vector against fixed user vectors of the users who rated it."""
    return RidgeSolver(P_rated, ridge).solve(R_rated)


def save_model(model: MfModel, path: str | os.PathLike) -> None:
    cfg = model.config
    with open(path, "wb") as fh:
        np.savez(
            fh,
            header=np.array(CHECKPOINT_HEADER),
            dim=np.int64(cfg.dim),
            reg=np.float64(cfg.reg),
            epochs=np.int64(cfg.epochs),
            seed=np.int64(cfg.seed),
            init_scale=np.float64(cfg.init_scale),
            P=model.P,
            Q=model.Q,
            user_ids=model.user_ids,
            item_ids=model.item_ids,
            loss_history=np.asarray(model.loss_history, dtype=np.float64),
        )


def load_model(path: str | os.PathLike) -> MfModel:
    with np.load(path, allow_pickle=False) as z:
        if "header" not in z or str(z["header"]) != CHECKPOINT_HEADER:
            raise DataError(f"{path}: not a {CHECKPOINT_HEADER} checkpoint")
        cfg = MfConfig(
            dim=int(z["dim"]),
            reg=float(z["reg"]),
            epochs=int(z["epochs"]),
            seed=int(z["seed"]),
            init_scale=float(z["init_scale"]),
        )
        return MfModel(
            z["P"], z["Q"], cfg, z["user_ids"], z["item_ids"], z["loss_history"].tolist()
        )
