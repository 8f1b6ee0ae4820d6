"""Sparse rating matrix, MovieLens ingestion and elementary statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np

from .errors import DatasetParseError, UnknownIdError, ValidationError

R_MIN = 1
R_MAX = 5

# canonical u.item genre order
MOVIELENS_GENRES = (
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def clamp(x, lo=R_MIN, hi=R_MAX):
    return min(max(x, lo), hi)


@dataclass(frozen=True, eq=False)
class RatingMatrix:
    """Immutable user x item rating matrix.

    Entries are kept as parallel COO arrays sorted by (user row, item column);
    ratings are small integers and only widened to float in ``dense``.
    ``authentic[i]`` is False for injected profiles. ``labels_known`` records
    whether the authenticity flags came from ground truth (a sidecar file or
    an injection) rather than the default all-authentic assumption.
    """

    user_ids: np.ndarray
    authentic: np.ndarray
    item_ids: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    item_genres: Optional[Mapping[int, frozenset]] = None
    labels_known: bool = False

    def __post_init__(self):
        for name in ("user_ids", "authentic", "item_ids", "rows", "cols", "values"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[int, int, int]], *,
                     user_ids=None, authentic=None, item_ids=None,
                     item_genres=None, labels_known=False) -> "RatingMatrix":
        """Build a matrix from ``(user, item, rating)`` triples.

        Rosters default to the sorted distinct ids seen in ``triples``; pass
        them explicitly to fix the order or to include users/items without
        ratings.
        """
        triples = [(int(u), int(i), r) for u, i, r in triples]
        if user_ids is None:
            user_ids = sorted({u for u, _, _ in triples})
        if item_ids is None:
            item_ids = sorted({i for _, i, _ in triples})
        user_ids = np.asarray(user_ids, dtype=np.int64)
        item_ids = np.asarray(item_ids, dtype=np.int64)
        if len(set(user_ids.tolist())) != len(user_ids):
            raise ValidationError("duplicate user ids in roster")
        if len(set(item_ids.tolist())) != len(item_ids):
            raise ValidationError("duplicate item ids in roster")
        if authentic is None:
            authentic = np.ones(len(user_ids), dtype=bool)
        authentic = np.asarray(authentic, dtype=bool)
        if authentic.shape != user_ids.shape:
            raise ValidationError("authentic flags must match the user roster")

        uidx = {u: k for k, u in enumerate(user_ids.tolist())}
        iidx = {i: k for k, i in enumerate(item_ids.tolist())}
        seen = set()
        rows, cols, vals = [], [], []
        for u, i, r in triples:
            if u not in uidx:
                raise UnknownIdError(f"user {u} not in roster")
            if i not in iidx:
                raise UnknownIdError(f"item {i} not in roster")
            if r != int(r) or not R_MIN <= r <= R_MAX:
                raise ValidationError(f"rating {r!r} for ({u}, {i}) is not an integer in [{R_MIN}, {R_MAX}]")
            if (u, i) in seen:
                raise ValidationError(f"duplicate rating for ({u}, {i})")
            seen.add((u, i))
            rows.append(uidx[u])
            cols.append(iidx[i])
            vals.append(int(r))
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.int8)
        order = np.lexsort((cols, rows))
        genres = None
        if item_genres is not None:
            genres = {int(i): frozenset(item_genres.get(int(i), ())) for i in item_ids.tolist()}
        return cls(user_ids, authentic, item_ids, rows[order], cols[order], vals[order],
                   genres, labels_known)

    # -- sizes -------------------------------------------------------------
    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_ratings(self) -> int:
        return len(self.values)

    @property
    def n_authentic(self) -> int:
        return int(self.authentic.sum())

    @property
    def authentic_ids(self) -> list[int]:
        return self.user_ids[self.authentic].tolist()

    @property
    def injected_ids(self) -> list[int]:
        return self.user_ids[~self.authentic].tolist()

    # -- lookups -----------------------------------------------------------
    @cached_property
    def user_index(self) -> dict[int, int]:
        return {u: k for k, u in enumerate(self.user_ids.tolist())}

    @cached_property
    def item_index(self) -> dict[int, int]:
        return {i: k for k, i in enumerate(self.item_ids.tolist())}

    def user_pos(self, user: int) -> int:
        try:
            return self.user_index[int(user)]
        except KeyError:
            raise UnknownIdError(f"unknown user {user}") from None

    def item_pos(self, item: int) -> int:
        try:
            return self.item_index[int(item)]
        except KeyError:
            raise UnknownIdError(f"unknown item {item}") from None

    @cached_property
    def dense(self) -> np.ndarray:
        """float64 users x items array, 0.0 where unrated. Read-only."""
        out = np.zeros((self.n_users, self.n_items))
        out[self.rows, self.cols] = self.values
        out.setflags(write=False)
        return out

    @cached_property
    def mask(self) -> np.ndarray:
        out = np.zeros((self.n_users, self.n_items), dtype=bool)
        out[self.rows, self.cols] = True
        out.setflags(write=False)
        return out

    def rating(self, user: int, item: int) -> Optional[int]:
        u, i = self.user_pos(user), self.item_pos(item)
        return int(self.dense[u, i]) if self.mask[u, i] else None

    def user_ratings(self, user: int) -> dict[int, int]:
        u = self.user_pos(user)
        lo, hi = np.searchsorted(self.rows, [u, u + 1])
        return dict(zip(self.item_ids[self.cols[lo:hi]].tolist(), self.values[lo:hi].tolist()))

    def item_ratings(self, item: int) -> dict[int, int]:
        i = self.item_pos(item)
        users = np.flatnonzero(self.mask[:, i])
        return dict(zip(self.user_ids[users].tolist(), self.dense[users, i].astype(int).tolist()))

    def triples(self) -> Iterator[tuple[int, int, int]]:
        uids, iids = self.user_ids[self.rows], self.item_ids[self.cols]
        return zip(uids.tolist(), iids.tolist(), self.values.tolist())

    def items_with_genre(self, genre: str) -> list[int]:
        if self.item_genres is None:
            return []
        return [i for i in self.item_ids.tolist() if genre in self.item_genres[i]]

    def __eq__(self, other):
        if not isinstance(other, RatingMatrix):
            return NotImplemented
        return (np.array_equal(self.user_ids, other.user_ids)
                and np.array_equal(self.authentic, other.authentic)
                and np.array_equal(self.item_ids, other.item_ids)
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols)
                and np.array_equal(self.values, other.values)
                and self.item_genres == other.item_genres)

    __hash__ = None

    def __repr__(self):
        return (f"RatingMatrix(n_users={self.n_users}, n_items={self.n_items}, "
                f"n_ratings={self.n_ratings}, n_authentic={self.n_authentic})")


@dataclass
class DatasetStats:
    n_users: int
    n_items: int
    n_ratings: int
    global_mean: Optional[float]
    per_user_mean: dict[int, float] = field(default_factory=dict)
    per_item_mean: dict[int, float] = field(default_factory=dict)
    per_item_count: dict[int, int] = field(default_factory=dict)


def compute_stats(m: RatingMatrix) -> DatasetStats:
    """Counts and means; means of users/items with no ratings are absent."""
    vals = m.values.astype(np.int64)
    global_mean = int(vals.sum()) / len(vals) if len(vals) else None
    u_sum = np.bincount(m.rows, weights=vals, minlength=m.n_users)
    u_cnt = np.bincount(m.rows, minlength=m.n_users)
    i_sum = np.bincount(m.cols, weights=vals, minlength=m.n_items)
    i_cnt = np.bincount(m.cols, minlength=m.n_items)
    uids, iids = m.user_ids.tolist(), m.item_ids.tolist()
    return DatasetStats(
        n_users=m.n_users,
        n_items=m.n_items,
        n_ratings=m.n_ratings,
        global_mean=global_mean,
        per_user_mean={uids[k]: float(u_sum[k] / u_cnt[k]) for k in np.flatnonzero(u_cnt)},
        per_item_mean={iids[k]: float(i_sum[k] / i_cnt[k]) for k in np.flatnonzero(i_cnt)},
        per_item_count={iids[k]: int(i_cnt[k]) for k in range(m.n_items)},
    )


def co_rated_items(m: RatingMatrix, a: int, b: int) -> list[int]:
    ua, ub = m.user_pos(a), m.user_pos(b)
    both = m.mask[ua] & m.mask[ub]
    return m.item_ids[both].tolist()


def inject_profiles(m: RatingMatrix, profiles) -> RatingMatrix:
    """Return a new matrix with ``profiles`` appended as inauthentic users.

    Each profile needs a ``user`` id and an ``all_ratings()`` mapping of
    item -> rating. The input matrix is left untouched.
    """
    if not profiles:
        return m
    existing = set(m.user_ids.tolist())
    triples = list(m.triples())
    new_ids = []
    for p in profiles:
        if p.user in existing or p.user in new_ids:
            raise ValidationError(f"profile user id {p.user} is not fresh")
        new_ids.append(p.user)
        for item, r in p.all_ratings().items():
            if item not in m.item_index:
                raise ValidationError(f"profile {p.user} rates unknown item {item}")
            triples.append((p.user, item, r))
    return RatingMatrix.from_triples(
        triples,
        user_ids=m.user_ids.tolist() + new_ids,
        authentic=m.authentic.tolist() + [False] * len(new_ids),
        item_ids=m.item_ids.tolist(),
        item_genres=m.item_genres,
        labels_known=True,
    )


def remove_users(m: RatingMatrix, users: Iterable[int]) -> RatingMatrix:
    drop = {int(u) for u in users}
    keep = [k for k, u in enumerate(m.user_ids.tolist()) if u not in drop]
    return RatingMatrix.from_triples(
        [t for t in m.triples() if t[0] not in drop],
        user_ids=m.user_ids[keep].tolist(),
        authentic=m.authentic[keep].tolist(),
        item_ids=m.item_ids.tolist(),
        item_genres=m.item_genres,
        labels_known=m.labels_known,
    )


# -- file formats --------------------------------------------------------

def _parse_int(path, line_no, text, what):
    try:
        return int(text)
    except ValueError:
        raise DatasetParseError(path, line_no, f"non-numeric {what} {text!r}") from None


def load_movielens(ratings_path, items_path=None, labels_path=None) -> RatingMatrix:
    """Load a ``u.data``-style file, optionally with ``u.item`` genres.

    With ``labels_path`` (one injected user id per line) those users are
    flagged inauthentic and the matrix is marked as carrying ground truth.
    """
    ratings_path = Path(ratings_path)
    triples = []
    first_seen = {}
    with open(ratings_path, encoding="latin-1") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\r\n").split("\t")
            if len(parts) != 4:
                raise DatasetParseError(ratings_path, line_no,
                                        f"expected 4 tab-separated columns, got {len(parts)}")
            u = _parse_int(ratings_path, line_no, parts[0], "user id")
            i = _parse_int(ratings_path, line_no, parts[1], "item id")
            r = _parse_int(ratings_path, line_no, parts[2], "rating")
            _parse_int(ratings_path, line_no, parts[3], "timestamp")
            if u < 1 or i < 1:
                raise DatasetParseError(ratings_path, line_no, "ids must be positive")
            if not R_MIN <= r <= R_MAX:
                raise DatasetParseError(ratings_path, line_no,
                                        f"rating {r} outside [{R_MIN}, {R_MAX}]")
            if (u, i) in first_seen:
                raise DatasetParseError(ratings_path, line_no,
                                        f"duplicate rating for user {u}, item {i} "
                                        f"(first on line {first_seen[(u, i)]})")
            first_seen[(u, i)] = line_no
            triples.append((u, i, r))

    genres = load_item_genres(items_path) if items_path is not None else None
    user_ids = sorted({u for u, _, _ in triples})
    injected = read_labels(labels_path) if labels_path is not None else set()
    unknown = injected - set(user_ids)
    if unknown:
        raise ValidationError(f"label file names users absent from the ratings: {sorted(unknown)[:5]}")
    # authentic users first, then injected users in id order
    user_ids = [u for u in user_ids if u not in injected] + sorted(injected)
    return RatingMatrix.from_triples(
        triples,
        user_ids=user_ids,
        authentic=[u not in injected for u in user_ids],
        item_genres=genres,
        labels_known=labels_path is not None,
    )


def load_item_genres(items_path) -> dict[int, frozenset]:
    items_path = Path(items_path)
    genres = {}
    n_genres = len(MOVIELENS_GENRES)
    with open(items_path, encoding="latin-1") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\r\n").split("|")
            if len(parts) < n_genres + 1:
                raise DatasetParseError(items_path, line_no,
                                        f"expected at least {n_genres + 1} fields, got {len(parts)}")
            item = _parse_int(items_path, line_no, parts[0], "item id")
            flags = parts[-n_genres:]
            if any(f not in ("0", "1") for f in flags):
                raise DatasetParseError(items_path, line_no, "genre flags must be 0/1")
            genres[item] = frozenset(g for g, f in zip(MOVIELENS_GENRES, flags) if f == "1")
    return genres


def write_ratings(m: RatingMatrix, path, labels_path=None) -> None:
    """Write ``m`` in u.data format (timestamps written as 0).

    When ``labels_path`` is given, the injected user ids go there, one per
    line.
    """
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for u, i, r in m.triples():
            fh.write(f"{u}\t{i}\t{r}\t0\n")
    if labels_path is not None:
        write_labels(m.injected_ids, labels_path)


def write_labels(user_ids: Iterable[int], path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for u in user_ids:
            fh.write(f"{u}\n")


def read_labels(path) -> set[int]:
    path = Path(path)
    out = set()
    with open(path, encoding="ascii") as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.strip():
                out.add(_parse_int(path, line_no, line.strip(), "user id"))
    return out
