"""MovieLens-style rating logs, chronological histories and holdout splits.

A :class:`Dataset` stores interactions column-wise (numpy arrays in input
order) and re-indexes users and items to dense 0-based indices assigned in
ascending external-id order.  The external ids are kept so results can be
reported in the original id space.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .errors import ConfigError, ParseError, UnknownIdError

SEPARATOR = b"::"


@dataclass(frozen=True)
class Interaction:
    user_id: int
    item_id: int
    rating: float
    timestamp: int

    def __post_init__(self):
        if not 1.0 <= self.rating <= 5.0:
            raise ValueError(f"rating {self.rating} outside [1, 5]")


class Dataset:
    """Immutable collection of (user, item, rating, timestamp) interactions."""

    def __init__(self, users, items, ratings, timestamps, *, validate: bool = True):
        self.users_ext = np.asarray(users, dtype=np.int64)
        self.items_ext = np.asarray(items, dtype=np.int64)
        self.ratings = np.asarray(ratings, dtype=np.float64)
        self.timestamps = np.asarray(timestamps, dtype=np.int64)
        n = len(self.users_ext)
        if not (len(self.items_ext) == len(self.ratings) == len(self.timestamps) == n):
            raise ValueError("column lengths differ")

        self.user_ids, self.u = np.unique(self.users_ext, return_inverse=True)
        self.item_ids, self.i = np.unique(self.items_ext, return_inverse=True)
        self.u = self.u.astype(np.int64).reshape(-1)
        self.i = self.i.astype(np.int64).reshape(-1)

        if validate and n:
            if np.any((self.ratings < 1.0) | (self.ratings > 5.0)) or not np.all(
                np.isfinite(self.ratings)
            ):
                raise ValueError("ratings must lie in [1, 5]")
            dup = _first_duplicate(self.u, self.i, len(self.item_ids))
            if dup is not None:
                raise ValueError(
                    f"duplicate (user, item) pair at row {dup}: "
                    f"({self.users_ext[dup]}, {self.items_ext[dup]})"
                )

        # chronological order per user; ties keep input order
        pos = np.arange(n)
        self._user_order = np.lexsort((pos, self.timestamps, self.u))
        self._user_ptr = np.zeros(self.n_users + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.u, minlength=self.n_users), out=self._user_ptr[1:])
        self._item_order = np.lexsort((pos, self.timestamps, self.i))
        self._item_ptr = np.zeros(self.n_items + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.i, minlength=self.n_items), out=self._item_ptr[1:])

        self.user_index = {int(x): k for k, x in enumerate(self.user_ids)}
        self.item_index = {int(x): k for k, x in enumerate(self.item_ids)}
        self._cache: dict = {}

    # -- construction -----------------------------------------------------
    @classmethod
    def from_interactions(cls, interactions: Iterable[Interaction]) -> "Dataset":
        rows = list(interactions)
        return cls(
            [r.user_id for r in rows],
            [r.item_id for r in rows],
            [r.rating for r in rows],
            [r.timestamp for r in rows],
        )

    @classmethod
    def empty(cls) -> "Dataset":
        return cls([], [], [], [])

    def subset(self, mask: np.ndarray) -> "Dataset":
        """New dataset holding the masked rows, input order preserved."""
        return Dataset(
            self.users_ext[mask],
            self.items_ext[mask],
            self.ratings[mask],
            self.timestamps[mask],
            validate=False,
        )

    # -- sizes ------------------------------------------------------------
    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_ratings(self) -> int:
        return len(self.ratings)

    def __len__(self) -> int:
        return self.n_ratings

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.users_ext, other.users_ext)
            and np.array_equal(self.items_ext, other.items_ext)
            and np.array_equal(self.ratings, other.ratings)
            and np.array_equal(self.timestamps, other.timestamps)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Dataset(n_users={self.n_users}, n_items={self.n_items}, n_ratings={self.n_ratings})"

    # -- row access -------------------------------------------------------
    def interaction(self, row: int) -> Interaction:
        return Interaction(
            int(self.users_ext[row]),
            int(self.items_ext[row]),
            float(self.ratings[row]),
            int(self.timestamps[row]),
        )

    @property
    def interactions(self) -> list[Interaction]:
        if "interactions" not in self._cache:
            self._cache["interactions"] = [self.interaction(r) for r in range(self.n_ratings)]
        return self._cache["interactions"]

    def __iter__(self) -> Iterator[Interaction]:
        return (self.interaction(r) for r in range(self.n_ratings))

    def user_rows(self, uidx: int) -> np.ndarray:
        """Row numbers of one user's interactions in chronological order."""
        return self._user_order[self._user_ptr[uidx] : self._user_ptr[uidx + 1]]

    def item_rows(self, iidx: int) -> np.ndarray:
        return self._item_order[self._item_ptr[iidx] : self._item_ptr[iidx + 1]]

    def history(self, user_id: int) -> list[Interaction]:
        return [self.interaction(r) for r in self.user_rows(self.uidx(user_id))]

    @property
    def per_user_history(self) -> dict[int, list[Interaction]]:
        if "per_user_history" not in self._cache:
            self._cache["per_user_history"] = {
                int(uid): [self.interaction(r) for r in self.user_rows(k)]
                for k, uid in enumerate(self.user_ids)
            }
        return self._cache["per_user_history"]

    def user_history_ids(self, user_id: int) -> tuple[np.ndarray, np.ndarray]:
        """(external item ids, ratings) of a user's history, chronological."""
        rows = self.user_rows(self.uidx(user_id))
        return self.items_ext[rows], self.ratings[rows]

    def item_raters_ids(self, item_id: int) -> tuple[np.ndarray, np.ndarray]:
        """(external user ids, ratings) of everyone who rated ``item_id``."""
        k = self.item_index.get(int(item_id))
        if k is None:
            return np.empty(0, dtype=np.int64), np.empty(0)
        rows = self.item_rows(k)
        return self.users_ext[rows], self.ratings[rows]

    def uidx(self, user_id: int) -> int:
        try:
            return self.user_index[int(user_id)]
        except KeyError:
            raise UnknownIdError(f"unknown user id {user_id}") from None

    def iidx(self, item_id: int) -> int:
        try:
            return self.item_index[int(item_id)]
        except KeyError:
            raise UnknownIdError(f"unknown item id {item_id}") from None

    def user_counts(self) -> np.ndarray:
        return np.diff(self._user_ptr)

    def item_counts(self) -> np.ndarray:
        return np.diff(self._item_ptr)

    def holdout(self, k: int) -> "HoldoutSplit":
        """Cached :func:`holdout_split`."""
        key = ("holdout", k)
        if key not in self._cache:
            self._cache[key] = holdout_split(self, k)
        return self._cache[key]

    # -- serialization ----------------------------------------------------
    def to_lines(self) -> Iterator[bytes]:
        for r in range(self.n_ratings):
            rating = self.ratings[r]
            rtxt = str(int(rating)) if float(rating).is_integer() else repr(float(rating))
            yield b"%d::%d::%s::%d\n" % (
                self.users_ext[r],
                self.items_ext[r],
                rtxt.encode(),
                self.timestamps[r],
            )

    def to_bytes(self) -> bytes:
        return b"".join(self.to_lines())


@dataclass(frozen=True)
class HoldoutSplit:
    train: Dataset
    heldout: dict[int, list[Interaction]]
    k: int


def _first_duplicate(u: np.ndarray, i: np.ndarray, n_items: int) -> int | None:
    key = u * max(n_items, 1) + i
    order = np.argsort(key, kind="stable")
    same = np.nonzero(key[order][1:] == key[order][:-1])[0]
    if len(same) == 0:
        return None
    return int(order[same + 1].min())


def parse_movielens(stream: BinaryIO | bytes | Iterable[bytes]) -> Dataset:
    """Parse ``UserID::MovieID::Rating::Timestamp`` lines.

    Accepts a binary stream, raw bytes or any iterable of byte lines.  LF and
    CRLF endings are both accepted and blank lines are ignored.  Ratings must
    be integers in 1..5.  Errors carry the 1-based line number.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    users: list[int] = []
    items: list[int] = []
    ratings: list[float] = []
    stamps: list[int] = []
    lines: list[int] = []
    for lineno, raw in enumerate(stream, 1):
        if isinstance(raw, str):
            raw = raw.encode("utf-8")
        line = raw.rstrip(b"\r\n")
        if not line.strip():
            continue
        parts = line.split(SEPARATOR)
        if len(parts) != 4:
            raise ParseError(f"expected 4 '::'-separated fields, got {len(parts)}", lineno)
        try:
            uid = int(parts[0])
            iid = int(parts[1])
            rating = float(parts[2])
            ts = int(parts[3])
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", lineno) from None
        if uid < 1 or iid < 1:
            raise ParseError("ids must be positive integers", lineno)
        if not (rating.is_integer() and 1 <= rating <= 5):
            raise ParseError(f"rating {parts[2].decode(errors='replace')} not an integer in 1..5", lineno)
        users.append(uid)
        items.append(iid)
        ratings.append(rating)
        stamps.append(ts)
        lines.append(lineno)
    if users:
        u = np.asarray(users, dtype=np.int64)
        i = np.asarray(items, dtype=np.int64)
        _, uu = np.unique(u, return_inverse=True)
        item_ids, ii = np.unique(i, return_inverse=True)
        dup = _first_duplicate(uu.reshape(-1), ii.reshape(-1), len(item_ids))
        if dup is not None:
            raise ParseError(f"duplicate rating for user {users[dup]} item {items[dup]}", lines[dup])
    return Dataset(users, items, ratings, stamps, validate=False)


def load_movielens(path: str | os.PathLike) -> Dataset:
    with open(path, "rb") as fh:
        return parse_movielens(fh)


def write_movielens(dataset: Dataset, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.writelines(dataset.to_lines())


def holdout_split(dataset: Dataset, k: int) -> HoldoutSplit:
    """Hold out each user's last ``k`` interactions.

    Users with ``k`` or fewer interactions stay entirely in ``train`` and do
    not appear in ``heldout``.
    """
    if k < 1:
        raise ConfigError(f"holdout size k must be >= 1, got {k}")
    mask = np.ones(dataset.n_ratings, dtype=bool)
    heldout: dict[int, list[Interaction]] = {}
    counts = dataset.user_counts()
    for uidx in np.nonzero(counts >= k + 1)[0]:
        rows = dataset.user_rows(uidx)[-k:]
        mask[rows] = False
        heldout[int(dataset.user_ids[uidx])] = [dataset.interaction(r) for r in rows]
    return HoldoutSplit(train=dataset.subset(mask), heldout=heldout, k=k)


def summary_stats(dataset: Dataset) -> dict:
    n_users, n_items, n_ratings = dataset.n_users, dataset.n_items, dataset.n_ratings
    cells = n_users * n_items
    density = 100.0 * n_ratings / cells if cells else 0.0
    return {"n_users": n_users, "n_items": n_items, "n_ratings": n_ratings, "density": density}


def _rank(ids: np.ndarray, counts: np.ndarray) -> list[int]:
    order = np.lexsort((ids, -counts))
    return [int(x) for x in ids[order]]


def popularity_rank(dataset: Dataset) -> list[int]:
    """Item ids by interaction count, most popular first; ties by ascending id."""
    return _rank(dataset.item_ids, dataset.item_counts())


def activity_rank(dataset: Dataset) -> list[int]:
    """User ids by number of ratings given, most active first; ties by ascending id."""
    return _rank(dataset.user_ids, dataset.user_counts())
