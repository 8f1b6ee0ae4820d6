"""Unsupervised correlation-count shilling detector.

A profile is flagged when the number of *other* profiles it correlates with
above ``correlation_threshold`` is greater than ``profile_threshold``.
Correlation is Pearson over co-rated items. Authenticity labels are never
read on the decision path; the only thing taken from them is the size of
the authentic population when a fractional profile threshold is resolved.
"""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ValidationError
from .ratings import RatingMatrix

log = logging.getLogger(__name__)

DEFAULT_CORRELATION_THRESHOLD = 0.95
DEFAULT_PROFILE_THRESHOLD = 0.10
DEFAULT_MIN_OVERLAP = 3
_BLOCK = 256


@dataclass(frozen=True)
class DetectionConfig:
    correlation_threshold: float = DEFAULT_CORRELATION_THRESHOLD
    # float -> fraction of (authentic) users, int -> absolute count
    profile_threshold: Union[int, float] = DEFAULT_PROFILE_THRESHOLD
    min_overlap: int = DEFAULT_MIN_OVERLAP

    def __post_init__(self):
        t = self.correlation_threshold
        if not 0 < t <= 1:
            raise ValidationError(f"correlation_threshold must be in (0, 1], got {t}")
        if t < 0.5:
            raise ValidationError(f"correlation_threshold {t} is too low; it must be >= 0.5")
        if t < 0.9:
            log.warning("correlation_threshold %.3f below 0.9 will flag many genuine profiles", t)
        p = self.profile_threshold
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            raise ValidationError(f"profile_threshold must be a count or a fraction, got {p!r}")
        if isinstance(p, int) and p < 1:
            raise ValidationError("profile_threshold count must be >= 1")
        if isinstance(p, float) and not 0 < p <= 1:
            raise ValidationError("profile_threshold fraction must be in (0, 1]")
        if self.min_overlap < 2:
            raise ValidationError("min_overlap must be >= 2 for a Pearson correlation")

    def to_dict(self) -> dict:
        return {
            "correlation_threshold": self.correlation_threshold,
            "profile_threshold": self.profile_threshold,
            "min_overlap": self.min_overlap,
        }


def resolve_profile_threshold(cfg: DetectionConfig, m: RatingMatrix) -> tuple[int, str]:
    """Turn the configured threshold into a count; also returns its basis."""
    p = cfg.profile_threshold
    if isinstance(p, int):
        return p, "count"
    if m.labels_known:
        n, basis = m.n_authentic, "authentic_users"
    else:
        log.warning("no ground-truth labels; profile threshold resolved against all %d users",
                    m.n_users)
        n, basis = m.n_users, "all_users"
    # tolerance absorbs binary noise such as 0.1 * 940 = 94.00000000000001
    return max(1, math.ceil(p * n - 1e-9)), basis


def pearson_rows(R: np.ndarray, M: np.ndarray, idx, min_overlap: int) -> np.ndarray:
    """Pearson correlation of rows ``idx`` against all rows over co-rated columns.

    Uses r = (n Sxy - Sx Sy) / sqrt((n Sxx - Sx^2)(n Syy - Sy^2)); with
    integer ratings every sum is exact, so zero variance is detected exactly.
    """
    idx = np.atleast_1d(idx)
    Mf = M.astype(np.float64)
    sq = R * R
    n = Mf[idx] @ Mf.T
    sx = R[idx] @ Mf.T
    sy = Mf[idx] @ R.T
    sxx = sq[idx] @ Mf.T
    syy = Mf[idx] @ sq.T
    sxy = R[idx] @ R.T
    num = n * sxy - sx * sy
    var_x = n * sxx - sx * sx
    var_y = n * syy - sy * sy
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / np.sqrt(var_x * var_y)
    r[(n < min_overlap) | (var_x <= 0) | (var_y <= 0)] = 0.0
    return np.clip(r, -1.0, 1.0)


def pearson_correlation(m: RatingMatrix, a: int, b: int,
                        min_overlap: int = DEFAULT_MIN_OVERLAP) -> float:
    ia, ib = m.user_pos(a), m.user_pos(b)
    return float(pearson_rows(m.dense, m.mask, [ia], min_overlap)[0, ib])


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    values: np.ndarray
    user_ids: np.ndarray
    min_overlap: int


def build_correlation_matrix(m: RatingMatrix, min_overlap: int = DEFAULT_MIN_OVERLAP,
                             workers: int = 1) -> CorrelationMatrix:
    n = m.n_users
    R, M = m.dense, m.mask
    blocks = [np.arange(s, min(s + _BLOCK, n)) for s in range(0, n, _BLOCK)]
    out = np.zeros((n, n))
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: pearson_rows(R, M, b, min_overlap), blocks))
    else:
        parts = [pearson_rows(R, M, b, min_overlap) for b in blocks]
    for b, part in zip(blocks, parts):
        out[b] = part
    out.setflags(write=False)
    return CorrelationMatrix(out, m.user_ids.copy(), min_overlap)


@dataclass
class DetectionReport:
    flagged: frozenset
    high_corr_count: dict
    config_used: DetectionConfig
    resolved_profile_threshold: int
    threshold_basis: str
    wall_time: float

    def to_dict(self, include_timing: bool = True) -> dict:
        doc = {
            "config": self.config_used.to_dict(),
            "resolved_profile_threshold": self.resolved_profile_threshold,
            "threshold_basis": self.threshold_basis,
            "n_users": len(self.high_corr_count),
            "n_flagged": len(self.flagged),
            "flagged": sorted(self.flagged),
            "high_corr_count": {str(u): c for u, c in self.high_corr_count.items()},
        }
        if include_timing:
            doc["wall_time_s"] = self.wall_time
        return doc

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=2)


def count_high_correlations(corr: np.ndarray, threshold: float) -> np.ndarray:
    above = corr > threshold
    np.fill_diagonal(above, False)
    return above.sum(axis=1)


def detect_shilling(m: RatingMatrix, cfg: DetectionConfig = DetectionConfig(),
                    workers: int = 1) -> DetectionReport:
    if m.n_users == 0:
        raise ValidationError("cannot run detection on an empty matrix")
    start = time.perf_counter()
    resolved, basis = resolve_profile_threshold(cfg, m)
    corr = build_correlation_matrix(m, cfg.min_overlap, workers=workers)
    counts = count_high_correlations(corr.values, cfg.correlation_threshold)
    uids = m.user_ids.tolist()
    flagged = frozenset(u for u, c in zip(uids, counts.tolist()) if c > resolved)

    constant = int((m.dense.max(axis=1) == np.where(m.mask, m.dense, np.inf).min(axis=1)).sum())
    if constant:
        log.info("%d profiles rate every item identically; they correlate with no one "
                 "and cannot be flagged", constant)
    return DetectionReport(
        flagged=flagged,
        high_corr_count=dict(zip(uids, counts.tolist())),
        config_used=cfg,
        resolved_profile_threshold=resolved,
        threshold_basis=basis,
        wall_time=time.perf_counter() - start,
    )
