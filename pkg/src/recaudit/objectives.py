"""White-box audit objectives on a matrix-factorization model.

Each objective is a callable over a rating-parameter array with an exact
``gradient`` method.  Past objectives take a length-k vector of ratings for
the factual trajectory; future objectives take a (k, n_items) table whose
entry (t, m) is the rating given if item m is recommended at step t.

Everything here works on dense model indices; :mod:`recaudit.audit` builds
objectives from external ids.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import distances
from .errors import ConfigError, EmptyCandidatesError, PreconditionError
from .mf import DEFAULT_AUDIT_RIDGE, RidgeSolver
from .policy import softmax_probs, top_one

RATING_MIN = 1.0
RATING_MAX = 5.0
# distances at or below this are treated as the non-differentiable minimum
KINK = 1e-9

RaterLookup = Callable[[int], tuple[np.ndarray, np.ndarray]]


def _target_grad(probs: np.ndarray, jpos: int, beta: float) -> np.ndarray:
    """d probs[jpos] / d scores."""
    g = -beta * probs[jpos] * probs
    g[jpos] += beta * probs[jpos]
    return g


def _softmax_vjp(probs: np.ndarray, g_probs: np.ndarray, beta: float) -> np.ndarray:
    return beta * probs * (g_probs - probs @ g_probs)


class _Objective:
    mode: str
    shape: tuple[int, ...]

    def _check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != self.shape:
            raise ConfigError(f"params have shape {theta.shape}, expected {self.shape}")
        return theta


# ---------------------------------------------------------------- reachability


class PastReachability(_Objective):
    """Softmax probability of ``target`` after refitting the user on edited ratings.

    The user vector is the ridge fit to the whole history: ``hist_*`` keep
    their factual ratings and the last ``k`` items (``edit_items``) take the
    parameter values.
    """

    mode = "past"

    def __init__(self, Q, hist_items, hist_ratings, edit_items, factual, candidates, target,
                 beta, ridge=DEFAULT_AUDIT_RIDGE):
        if beta <= 0:
            raise ConfigError("beta must be > 0")
        self.Q = Q
        self.hist_items = np.asarray(hist_items, dtype=np.int64)
        self.hist_ratings = np.asarray(hist_ratings, dtype=np.float64)
        self.edit_items = np.asarray(edit_items, dtype=np.int64)
        self.factual = np.asarray(factual, dtype=np.float64)
        self.candidates = np.asarray(candidates, dtype=np.int64)
        self.beta = float(beta)
        self.k = len(self.edit_items)
        self.shape = (self.k,)
        pos = np.searchsorted(self.candidates, target)
        if pos >= len(self.candidates) or self.candidates[pos] != target:
            raise PreconditionError(f"target item {target} is not a candidate")
        self.target = int(target)
        self._jpos = int(pos)
        rated = np.concatenate([self.hist_items, self.edit_items])
        self._solver = RidgeSolver(Q[rated], ridge)
        self._C = Q[self.candidates]

    def user_vector(self, theta) -> np.ndarray:
        theta = self._check(theta)
        return self._solver.solve(np.concatenate([self.hist_ratings, theta]))

    def distribution(self, theta) -> np.ndarray:
        return softmax_probs(self._C @ self.user_vector(theta), self.beta)

    def __call__(self, theta) -> float:
        return float(self.distribution(theta)[self._jpos])

    def gradient(self, theta) -> np.ndarray:
        probs = self.distribution(theta)
        g_p = self._C.T @ _target_grad(probs, self._jpos, self.beta)
        # p = A^{-1} X^T r and the edited ratings enter through the last k rows of X
        return self.Q[self.edit_items] @ self._solver.apply_inverse(g_p)


class FutureReachability(_Objective):
    """Probability of ``target`` after a k-step top-1 rollout with rated steps.

    The rollout starts from ``p_start``; at each step the highest-scoring
    remaining candidate (never the target) is recommended, rated with the
    table entry for (step, item), and the user vector is refit on the history
    plus all rollout ratings.  Item choice is piecewise constant in the
    ratings, so gradients flow through the ratings only.
    """

    mode = "future"

    def __init__(self, Q, p_start, hist_items, hist_ratings, candidates, target, beta, k,
                 ridge=DEFAULT_AUDIT_RIDGE, num_samples=1):
        if beta <= 0:
            raise ConfigError("beta must be > 0")
        if k < 0:
            raise ConfigError("horizon k must be >= 0")
        if num_samples < 1:
            raise ConfigError("num_samples must be >= 1")
        self.Q = Q
        self.p_start = np.asarray(p_start, dtype=np.float64)
        self.candidates = np.asarray(candidates, dtype=np.int64)
        self.beta = float(beta)
        self.k = int(k)
        self.num_samples = int(num_samples)
        self.shape = (self.k, Q.shape[0])
        pos = np.searchsorted(self.candidates, target)
        if pos >= len(self.candidates) or self.candidates[pos] != target:
            raise PreconditionError(f"target item {target} is not a candidate")
        self.target = int(target)
        self._jpos = int(pos)
        self._C = Q[self.candidates]
        hist_items = np.asarray(hist_items, dtype=np.int64)
        Xh = Q[hist_items]
        self._gram0 = Xh.T @ Xh + ridge * np.eye(Q.shape[1])
        self._b0 = Xh.T @ np.asarray(hist_ratings, dtype=np.float64)

    def rollout(self, theta):
        """Returns (trajectory candidate positions, final user vector, solver)."""
        theta = self._check(theta)
        avail = np.ones(len(self.candidates), dtype=bool)
        avail[self._jpos] = False
        gram, b = self._gram0.copy(), self._b0.copy()
        p, solver, traj = self.p_start, None, []
        for step in range(self.k):
            idx = np.flatnonzero(avail)
            if idx.size == 0:
                raise EmptyCandidatesError(f"candidates exhausted at rollout step {step + 1}")
            pos = idx[top_one(self._C[idx] @ p)]
            q = self._C[pos]
            gram += np.outer(q, q)
            b += q * theta[step, self.candidates[pos]]
            solver = RidgeSolver.from_gram(gram)
            p = solver.apply_inverse(b)
            avail[pos] = False
            traj.append(int(pos))
        return traj, p, solver

    def trajectory(self, theta) -> list[int]:
        return [int(self.candidates[pos]) for pos in self.rollout(theta)[0]]

    def _final(self, theta):
        traj, p, solver = self.rollout(theta)
        keep = np.ones(len(self.candidates), dtype=bool)
        keep[traj] = False
        idx = np.flatnonzero(keep)
        probs = softmax_probs(self._C[idx] @ p, self.beta)
        jpos = int(np.searchsorted(idx, self._jpos))
        return traj, solver, idx, probs, jpos

    def __call__(self, theta) -> float:
        # top-1 rollouts are deterministic, so every sample gives this value
        _, _, _, probs, jpos = self._final(theta)
        return float(probs[jpos])

    def gradient(self, theta) -> np.ndarray:
        traj, solver, idx, probs, jpos = self._final(theta)
        grad = np.zeros(self.shape)
        if not traj:
            return grad
        w = solver.apply_inverse(self._C[idx].T @ _target_grad(probs, jpos, self.beta))
        for step, pos in enumerate(traj):
            grad[step, self.candidates[pos]] = self._C[pos] @ w
        return grad


# ------------------------------------------------------------------- stability


class _ItemRefits:
    """Item vectors refit with the adversary's rating as a free parameter.

    For item m rated by ``raters`` (fixed user vectors and ratings) plus the
    adversary, the refit vector is ``offset + slope * rating``.
    """

    def __init__(self, p_adv: np.ndarray, raters: RaterLookup, ridge: float):
        self.p_adv = p_adv
        self.raters = raters
        self.ridge = ridge
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def __getitem__(self, item: int) -> tuple[np.ndarray, np.ndarray]:
        if item not in self._cache:
            P_r, r = self.raters(item)
            X = np.vstack([P_r, self.p_adv[None, :]]) if len(r) else self.p_adv[None, :]
            solver = RidgeSolver(X, self.ridge)
            offset = solver.solve(np.concatenate([np.asarray(r, dtype=np.float64), [0.0]]))
            slope = solver.apply_inverse(self.p_adv)
            self._cache[item] = (offset, slope)
        return self._cache[item]

    def vector(self, item: int, rating: float) -> np.ndarray:
        offset, slope = self[item]
        return offset + slope * rating


class _StabilityCore:
    """Distance between the target user's distribution and a reference as the
    scores of some candidates move linearly in the adversary's ratings."""

    def __init__(self, Q, p_target, candidates, beta, distance):
        if beta <= 0:
            raise ConfigError("beta must be > 0")
        if distance not in distances.DISTANCES:
            raise ConfigError(f"unknown distance {distance!r}")
        self.p_target = np.asarray(p_target, dtype=np.float64)
        self.candidates = np.asarray(candidates, dtype=np.int64)
        self.beta = float(beta)
        self.distance = distance
        self._s0 = Q[self.candidates] @ self.p_target

    def edit_terms(self, refits: _ItemRefits, items) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Candidate positions (-1 if absent) and score intercept/slope per edited item."""
        pos = np.full(len(items), -1, dtype=np.int64)
        a = np.zeros(len(items))
        b = np.zeros(len(items))
        for s, m in enumerate(items):
            k = np.searchsorted(self.candidates, m)
            if k < len(self.candidates) and self.candidates[k] == m:
                offset, slope = refits[m]
                pos[s], a[s], b[s] = k, self.p_target @ offset, self.p_target @ slope
        return pos, a, b

    def probs(self, pos, a, b, ratings) -> np.ndarray:
        s = self._s0.copy()
        hit = pos >= 0
        s[pos[hit]] = a[hit] + b[hit] * ratings[hit]
        return softmax_probs(s, self.beta)

    def value(self, probs, reference) -> float:
        return distances.distance(self.distance, probs, reference)

    def grad(self, pos, a, b, probs, reference, value, ratings, lo=RATING_MIN, hi=RATING_MAX):
        """Gradient in the edited ratings.

        At a zero distance the function behaves like ``|M delta|``; there the
        steepest-ascent direction (top right singular vector of M, scaled by
        its singular value) is returned.  Both signs are equally steep, so the
        sign is chosen by evaluating the distance one rating unit along each
        side (projected onto the box), then by which side has more room.
        """
        hit = pos >= 0
        grad = np.zeros(len(pos))
        if not hit.any():
            return grad
        if value > KINK:
            g_s = _softmax_vjp(probs, distances.distance_grad(self.distance, probs, reference, value),
                               self.beta)
            grad[hit] = g_s[pos[hit]] * b[hit]
            return grad
        cols = np.flatnonzero(hit)
        J = np.empty((len(probs), len(cols)))
        for c, s in enumerate(cols):
            col = -self.beta * probs[pos[s]] * probs
            col[pos[s]] += self.beta * probs[pos[s]]
            J[:, c] = col * b[s]
        M = distances.local_weights(self.distance, probs)[:, None] * J
        _, sv, vt = np.linalg.svd(M, full_matrices=False)
        if sv[0] <= 0:
            return grad
        direction = np.zeros(len(pos))
        direction[cols] = vt[0]
        up, down = np.clip(ratings + direction, lo, hi), np.clip(ratings - direction, lo, hi)
        v_up = self.value(self.probs(pos, a, b, up), reference)
        v_down = self.value(self.probs(pos, a, b, down), reference)
        room_up = np.abs(up - ratings).sum()
        room_down = np.abs(down - ratings).sum()
        if v_down > v_up or (v_down == v_up and room_down > room_up):
            direction = -direction
        return sv[0] * direction


class PastStability(_Objective):
    """Distance the target user's distribution moves when the adversary's last
    k ratings are edited.

    Each edited item's vector is refit over its raters plus the adversary.
    The reference distribution is the one at the factual ratings, so factual
    parameters give distance 0.
    """

    mode = "past"

    def __init__(self, Q, p_target, candidates, p_adversary, edit_items, factual, raters: RaterLookup,
                 beta, distance=distances.HELLINGER, ridge=DEFAULT_AUDIT_RIDGE):
        self.edit_items = np.asarray(edit_items, dtype=np.int64)
        self.factual = np.asarray(factual, dtype=np.float64)
        self.k = len(self.edit_items)
        self.shape = (self.k,)
        self._core = _StabilityCore(Q, p_target, candidates, beta, distance)
        self._refits = _ItemRefits(np.asarray(p_adversary, dtype=np.float64), raters, ridge)
        self._pos, self._a, self._b = self._core.edit_terms(self._refits, self.edit_items)
        self.reference = self._core.probs(self._pos, self._a, self._b, self.factual)

    def item_vector(self, s: int, rating: float) -> np.ndarray:
        return self._refits.vector(int(self.edit_items[s]), rating)

    def distribution(self, theta) -> np.ndarray:
        return self._core.probs(self._pos, self._a, self._b, self._check(theta))

    def __call__(self, theta) -> float:
        return self._core.value(self.distribution(theta), self.reference)

    def gradient(self, theta) -> np.ndarray:
        theta = self._check(theta)
        probs = self.distribution(theta)
        value = self._core.value(probs, self.reference)
        return self._core.grad(self._pos, self._a, self._b, probs, self.reference, value, theta)


class FutureStability(_Objective):
    """Distance the target user's distribution moves while the adversary follows
    k top-1 recommendations and rates each item from the table.

    The reference is the target user's distribution under the unedited model.
    User vectors stay fixed and rated items leave the adversary's pool, so the
    adversary's top-1 path does not depend on the ratings; it is computed once.
    """

    mode = "future"

    def __init__(self, Q, p_target, candidates, p_adversary, adversary_candidates, raters: RaterLookup,
                 beta, k, distance=distances.HELLINGER, ridge=DEFAULT_AUDIT_RIDGE, num_samples=1):
        if k < 0:
            raise ConfigError("horizon k must be >= 0")
        if num_samples < 1:
            raise ConfigError("num_samples must be >= 1")
        self.k = int(k)
        self.num_samples = int(num_samples)
        self.shape = (self.k, Q.shape[0])
        p_adv = np.asarray(p_adversary, dtype=np.float64)
        pool = np.asarray(adversary_candidates, dtype=np.int64)
        if self.k > len(pool):
            raise EmptyCandidatesError(f"candidates exhausted at rollout step {len(pool) + 1}")
        # stable descending sort == repeated top-1 with smallest-index ties
        order = np.argsort(-(Q[pool] @ p_adv), kind="stable")
        self.path = pool[order[: self.k]]
        self._core = _StabilityCore(Q, p_target, candidates, beta, distance)
        self._refits = _ItemRefits(p_adv, raters, ridge)
        self._pos, self._a, self._b = self._core.edit_terms(self._refits, self.path)
        self.reference = softmax_probs(self._core._s0, self._core.beta)
        self._steps = np.arange(self.k)

    def trajectory(self, theta=None) -> list[int]:
        return [int(m) for m in self.path]

    def _ratings(self, theta) -> np.ndarray:
        return self._check(theta)[self._steps, self.path]

    def distribution(self, theta) -> np.ndarray:
        return self._core.probs(self._pos, self._a, self._b, self._ratings(theta))

    def __call__(self, theta) -> float:
        return self._core.value(self.distribution(theta), self.reference)

    def gradient(self, theta) -> np.ndarray:
        ratings = self._ratings(theta)
        probs = self._core.probs(self._pos, self._a, self._b, ratings)
        value = self._core.value(probs, self.reference)
        g = self._core.grad(self._pos, self._a, self._b, probs, self.reference, value, ratings)
        grad = np.zeros(self.shape)
        grad[self._steps, self.path] = g
        return grad
