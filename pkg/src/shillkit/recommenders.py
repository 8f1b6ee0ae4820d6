"""User-based CF, item-based CF and SVD rating predictors.

Similarities are plain cosines over co-rated entries (no mean-centring).
All sums are taken over integer ratings, so the vectorised products are
exact and the resulting similarity matrices are exactly symmetric no matter
how rows are blocked.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ColdStartError, UnknownIdError, ValidationError
from .ratings import R_MAX, R_MIN, DatasetStats, RatingMatrix

USER_BASED = "user"
ITEM_BASED = "item"
SVD = "svd"
KINDS = (USER_BASED, ITEM_BASED, SVD)

DEFAULT_MIN_OVERLAP = 3


@dataclass(frozen=True)
class PredictionModel:
    kind: str
    neighborhood_size: Optional[int] = None
    min_overlap: int = DEFAULT_MIN_OVERLAP
    svd_rank: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if (self.svd_rank is not None) != (self.kind == SVD):
            raise ValidationError("svd_rank must be given exactly when kind is 'svd'")
        if self.svd_rank is not None and self.svd_rank < 1:
            raise ValidationError("svd_rank must be >= 1")
        if self.min_overlap < 1:
            raise ValidationError("min_overlap must be >= 1")
        if self.neighborhood_size is not None and self.neighborhood_size < 1:
            raise ValidationError("neighborhood_size must be >= 1")


def cosine_rows(R: np.ndarray, M: np.ndarray, idx, min_overlap: int) -> np.ndarray:
    """Cosine of rows ``idx`` of ``R`` against every row, over co-rated columns.

    ``R`` holds ratings with 0 for missing cells and ``M`` the observed mask.
    Entries with fewer than ``min_overlap`` co-rated columns are 0.
    """
    idx = np.atleast_1d(idx)
    Mf = M.astype(np.float64)
    sq = R * R
    dot = R[idx] @ R.T
    norm_a = sq[idx] @ Mf.T
    norm_b = Mf[idx] @ sq.T
    overlap = Mf[idx] @ Mf.T
    with np.errstate(divide="ignore", invalid="ignore"):
        sim = dot / np.sqrt(norm_a * norm_b)
    sim[(overlap < min_overlap) | (norm_a == 0) | (norm_b == 0)] = 0.0
    return np.clip(sim, -1.0, 1.0)


def user_similarity_matrix(m: RatingMatrix, min_overlap: int = DEFAULT_MIN_OVERLAP) -> np.ndarray:
    return cosine_rows(m.dense, m.mask, np.arange(m.n_users), min_overlap)


def item_similarity_matrix(m: RatingMatrix, min_overlap: int = DEFAULT_MIN_OVERLAP) -> np.ndarray:
    return cosine_rows(m.dense.T, m.mask.T, np.arange(m.n_items), min_overlap)


def user_cosine_similarity(m: RatingMatrix, a: int, b: int,
                           min_overlap: int = DEFAULT_MIN_OVERLAP) -> float:
    ia, ib = m.user_pos(a), m.user_pos(b)
    return float(cosine_rows(m.dense, m.mask, [ia], min_overlap)[0, ib])


def item_cosine_similarity(m: RatingMatrix, i: int, j: int,
                           min_overlap: int = DEFAULT_MIN_OVERLAP) -> float:
    ii, ij = m.item_pos(i), m.item_pos(j)
    return float(cosine_rows(m.dense.T, m.mask.T, [ii], min_overlap)[0, ij])


def _user_means(m: RatingMatrix) -> np.ndarray:
    counts = m.mask.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return m.dense.sum(axis=1) / counts


def _top_k(weights: np.ndarray, candidates: np.ndarray, k: Optional[int]) -> np.ndarray:
    if k is None or len(candidates) <= k:
        return candidates
    order = np.argsort(-np.abs(weights[candidates]), kind="stable")
    return candidates[order[:k]]


class UserBasedCF:
    """Mean-centred user-user prediction.

    pred(k, i) = mean_k + sum_u sim(k,u) (r_ui - mean_u) / sum_u |sim(k,u)|
    over the users u != k who rated i (or the ``neighborhood_size`` of them
    with largest |sim|).
    """

    def __init__(self, m: RatingMatrix, model: PredictionModel, user_means=None):
        self.m = m
        self.model = model
        self.means = _user_means(m) if user_means is None else np.asarray(user_means, float)

    def similarity_rows(self, upos: np.ndarray) -> np.ndarray:
        sims = cosine_rows(self.m.dense, self.m.mask, upos, self.model.min_overlap)
        sims[np.arange(len(upos)), upos] = 0.0
        return sims

    def predict_many(self, users: Sequence[int], items: Sequence[int]) -> np.ndarray:
        """Predictions for the grid ``users x items``; raises on cold start."""
        m = self.m
        upos = np.array([m.user_pos(u) for u in users], dtype=np.int64)
        ipos = np.array([m.item_pos(i) for i in items], dtype=np.int64)
        cold = [u for u, p in zip(users, upos) if not m.mask[p].any()]
        if cold:
            raise ColdStartError(f"users without ratings: {cold[:5]}")
        sims = self.similarity_rows(upos)
        out = np.empty((len(upos), len(ipos)))
        k = self.model.neighborhood_size
        for c, i in enumerate(ipos):
            raters = np.flatnonzero(m.mask[:, i])
            dev = m.dense[raters, i] - self.means[raters]
            if k is None:
                w = sims[:, raters]
                num = w @ dev
                den = np.abs(w).sum(axis=1)
            else:
                num = np.empty(len(upos))
                den = np.empty(len(upos))
                for r, p in enumerate(upos):
                    cand = np.flatnonzero(raters != p)
                    sel = _top_k(sims[r, raters], cand, k)
                    w = sims[r, raters[sel]]
                    num[r] = w @ dev[sel]
                    den[r] = np.abs(w).sum()
            base = self.means[upos]
            with np.errstate(divide="ignore", invalid="ignore"):
                pred = np.where(den > 0, base + num / den, base)
            out[:, c] = np.clip(pred, R_MIN, R_MAX)
        return out

    def predict(self, user: int, item: int) -> float:
        return float(self.predict_many([user], [item])[0, 0])


class ItemBasedCF:
    """Similarity-weighted average of the user's own ratings.

    pred(k, i) = sum_b sim(i,b) r_kb / sum_b |sim(i,b)| over items b != i
    rated by k (or the ``neighborhood_size`` most similar of them).
    """

    def __init__(self, m: RatingMatrix, model: PredictionModel):
        self.m = m
        self.model = model
        self.means = _user_means(m)

    def similarity_rows(self, ipos: np.ndarray) -> np.ndarray:
        sims = cosine_rows(self.m.dense.T, self.m.mask.T, ipos, self.model.min_overlap)
        sims[np.arange(len(ipos)), ipos] = 0.0
        return sims

    def predict_many(self, users: Sequence[int], items: Sequence[int]) -> np.ndarray:
        m = self.m
        upos = np.array([m.user_pos(u) for u in users], dtype=np.int64)
        ipos = np.array([m.item_pos(i) for i in items], dtype=np.int64)
        cold = [u for u, p in zip(users, upos) if not m.mask[p].any()]
        if cold:
            raise ColdStartError(f"users without ratings: {cold[:5]}")
        sims = self.similarity_rows(ipos)
        R, Mf = m.dense[upos], m.mask[upos].astype(np.float64)
        k = self.model.neighborhood_size
        if k is None:
            num = R @ sims.T
            den = Mf @ np.abs(sims).T
        else:
            num = np.empty((len(upos), len(ipos)))
            den = np.empty_like(num)
            for r, p in enumerate(upos):
                rated = np.flatnonzero(m.mask[p])
                for c, i in enumerate(ipos):
                    cand = np.flatnonzero(rated != i)
                    sel = rated[_top_k(sims[c, rated], cand, k)]
                    num[r, c] = sims[c, sel] @ m.dense[p, sel]
                    den[r, c] = np.abs(sims[c, sel]).sum()
        base = self.means[upos][:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            pred = np.where(den > 0, num / den, base)
        return np.clip(pred, R_MIN, R_MAX)

    def predict(self, user: int, item: int) -> float:
        return float(self.predict_many([user], [item])[0, 0])


@dataclass(frozen=True, eq=False)
class FactorModel:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    fill_values: np.ndarray
    user_ids: np.ndarray
    item_ids: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.S)

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


def densify(m: RatingMatrix, stats: DatasetStats) -> tuple[np.ndarray, np.ndarray]:
    """Fill unrated cells with the item mean, or the global mean for unrated items."""
    global_mean = stats.global_mean if stats.global_mean is not None else 0.0
    fill = np.array([stats.per_item_mean.get(i, global_mean) for i in m.item_ids.tolist()])
    X = np.where(m.mask, m.dense, fill[None, :])
    return X, fill


def svd_factorize(m: RatingMatrix, stats: DatasetStats, rank: int) -> FactorModel:
    if m.n_users == 0 or m.n_items == 0:
        raise ValidationError("cannot factorise an empty matrix")
    if not 1 <= rank <= min(m.n_users, m.n_items):
        raise ValidationError(f"rank {rank} outside [1, {min(m.n_users, m.n_items)}]")
    X, fill = densify(m, stats)
    U, S, Vt = np.linalg.svd(X, full_matrices=False)
    U, S, V = U[:, :rank].copy(), S[:rank].copy(), Vt[:rank].T.copy()
    # sign convention: largest-magnitude entry of each U column is nonnegative
    pivots = np.argmax(np.abs(U), axis=0)
    signs = np.where(U[pivots, np.arange(rank)] < 0, -1.0, 1.0)
    U *= signs
    V *= signs
    return FactorModel(U, S, V, fill, m.user_ids.copy(), m.item_ids.copy())


class SVDModel:
    def __init__(self, m: RatingMatrix, model: PredictionModel, stats: DatasetStats):
        self.m = m
        self.model = model
        self.factors = svd_factorize(m, stats, model.svd_rank)

    def predict_many(self, users: Sequence[int], items: Sequence[int]) -> np.ndarray:
        upos = [self.m.user_pos(u) for u in users]
        ipos = [self.m.item_pos(i) for i in items]
        f = self.factors
        return np.clip((f.U[upos] * f.S) @ f.V[ipos].T, R_MIN, R_MAX)

    def predict(self, user: int, item: int) -> float:
        return float(self.predict_many([user], [item])[0, 0])


def make_predictor(m: RatingMatrix, model: PredictionModel, stats: DatasetStats = None):
    if model.kind == USER_BASED:
        return UserBasedCF(m, model)
    if model.kind == ITEM_BASED:
        return ItemBasedCF(m, model)
    if stats is None:
        from .ratings import compute_stats
        stats = compute_stats(m)
    return SVDModel(m, model, stats)


def predict_user_based(m: RatingMatrix, stats: DatasetStats, model: PredictionModel,
                       k: int, item: int) -> float:
    means = np.array([stats.per_user_mean.get(u, np.nan) for u in m.user_ids.tolist()])
    return UserBasedCF(m, model, user_means=means).predict(k, item)


def predict_item_based(m: RatingMatrix, model: PredictionModel, k: int, item: int) -> float:
    return ItemBasedCF(m, model).predict(k, item)


def predict_svd(f: FactorModel, k: int, item: int) -> float:
    upos = np.flatnonzero(f.user_ids == k)
    ipos = np.flatnonzero(f.item_ids == item)
    if len(upos) == 0 or len(ipos) == 0:
        raise UnknownIdError(f"({k}, {item}) outside the factor model")
    value = (f.U[upos[0]] * f.S) @ f.V[ipos[0]]
    return float(np.clip(value, R_MIN, R_MAX))
