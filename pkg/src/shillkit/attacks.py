"""Shilling profile generators: random, average, bandwagon and segment.

Every generator follows the same sampling protocol so a run can be replayed
from its config alone:

1. ``rng = numpy.random.default_rng(seed)``.
2. The filler pool is the ascending list of item ids that are neither
   targets nor selected items (segment attacks also drop every item of the
   segment genre).
3. For profile ordinal 1..n, in order: draw the fillers with
   ``rng.choice(pool, size=n_fillers, replace=False)`` and sort them; then,
   only if ``jitter_sigma > 0``, draw ``rng.normal(0, jitter_sigma, n_fillers)``
   and add it to the sorted fillers' base ratings.
4. Ratings are rounded half-up and clamped to the rating scale.

Profile user ids are ``max(existing id) + ordinal``.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CapabilityError, ValidationError
from .ratings import R_MAX, R_MIN, DatasetStats, RatingMatrix, clamp, round_half_up

log = logging.getLogger(__name__)

MODELS = ("random", "average", "bandwagon", "segment")
INTENTS = ("push", "nuke")
FILLER_RULES = ("random", "average")

DEFAULT_SELECTED_COUNT = 10


@dataclass(frozen=True)
class AttackConfig:
    model: str
    intent: str
    attack_size: float
    filler_size: float
    target_items: tuple
    selected_count: int = DEFAULT_SELECTED_COUNT
    segment_genre: Optional[str] = None
    seed: int = 0
    jitter_sigma: float = 0.0
    filler_rule: str = "random"

    def __post_init__(self):
        object.__setattr__(self, "target_items", tuple(int(t) for t in self.target_items))
        if self.model not in MODELS:
            raise ValidationError(f"unknown attack model {self.model!r}")
        if self.intent not in INTENTS:
            raise ValidationError(f"unknown intent {self.intent!r}")
        if not 0 < self.attack_size <= 1:
            raise ValidationError(f"attack_size must be in (0, 1], got {self.attack_size}")
        if not 0 < self.filler_size <= 1:
            raise ValidationError(f"filler_size must be in (0, 1], got {self.filler_size}")
        if not self.target_items:
            raise ValidationError("at least one target item is required")
        if len(set(self.target_items)) != len(self.target_items):
            raise ValidationError("target items must be distinct")
        if self.jitter_sigma < 0:
            raise ValidationError("jitter_sigma must be nonnegative")
        if self.filler_rule not in FILLER_RULES:
            raise ValidationError(f"unknown filler rule {self.filler_rule!r}")
        if self.model in ("bandwagon", "segment") and self.selected_count < 1:
            raise ValidationError("selected_count must be >= 1")
        if self.model == "segment" and not self.segment_genre:
            raise ValidationError("segment attacks need a segment_genre")

    @property
    def target_rating(self) -> int:
        return R_MAX if self.intent == "push" else R_MIN

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "intent": self.intent,
            "attack_size": self.attack_size,
            "filler_size": self.filler_size,
            "target_items": list(self.target_items),
            "selected_count": self.selected_count,
            "segment_genre": self.segment_genre,
            "seed": self.seed,
            "jitter_sigma": self.jitter_sigma,
            "filler_rule": self.filler_rule,
        }


@dataclass
class ShillingProfile:
    user: int
    selected: dict = field(default_factory=dict)
    filler: dict = field(default_factory=dict)
    target: dict = field(default_factory=dict)

    def all_ratings(self) -> dict:
        return {**self.selected, **self.filler, **self.target}


def popularity_ranking(m: RatingMatrix, stats: DatasetStats) -> list[int]:
    """Items by rating count desc, then mean rating desc, then id asc."""
    gm = stats.global_mean or 0.0
    return sorted(m.item_ids.tolist(),
                  key=lambda i: (-stats.per_item_count.get(i, 0),
                                 -stats.per_item_mean.get(i, gm), i))


def _validate_targets(m: RatingMatrix, cfg: AttackConfig):
    missing = [t for t in cfg.target_items if t not in m.item_index]
    if missing:
        raise ValidationError(f"target items not in the matrix: {missing}")


def _n_profiles(m: RatingMatrix, cfg: AttackConfig) -> int:
    n = round_half_up(cfg.attack_size * m.n_authentic)
    if n < 1:
        raise ValidationError(
            f"attack_size {cfg.attack_size} of {m.n_authentic} authentic users yields no profiles")
    return n


def _build(m, cfg, pool, selected, base_rating) -> list[ShillingProfile]:
    """Run the shared sampling protocol; ``base_rating(item)`` gives unjittered filler ratings."""
    n_profiles = _n_profiles(m, cfg)
    n_fillers = round_half_up(cfg.filler_size * m.n_items)
    pool = np.asarray(sorted(pool), dtype=np.int64)
    if len(pool) == 0:
        raise ValidationError("no items left to draw fillers from")
    if n_fillers > len(pool):
        log.warning("filler count %d reduced to %d to keep targets/selected disjoint",
                    n_fillers, len(pool))
        n_fillers = len(pool)
    n_fillers = max(n_fillers, 1)

    rng = np.random.default_rng(cfg.seed)
    first_id = int(m.user_ids.max()) + 1 if m.n_users else 1
    target = {t: cfg.target_rating for t in cfg.target_items}
    profiles = []
    for ordinal in range(n_profiles):
        fillers = np.sort(rng.choice(pool, size=n_fillers, replace=False)).tolist()
        base = [base_rating(i) for i in fillers]
        if cfg.jitter_sigma > 0:
            noise = rng.normal(0.0, cfg.jitter_sigma, size=n_fillers)
            ratings = [clamp(round_half_up(b + e)) for b, e in zip(base, noise)]
        else:
            ratings = [clamp(b) for b in base]
        profiles.append(ShillingProfile(
            user=first_id + ordinal,
            selected=dict(selected),
            filler=dict(zip(fillers, ratings)),
            target=dict(target),
        ))
    return profiles


def _global_rating(stats: DatasetStats) -> int:
    if stats.global_mean is None:
        raise ValidationError("matrix has no ratings")
    return round_half_up(stats.global_mean)


def _item_rating(stats: DatasetStats):
    fallback = _global_rating(stats)

    def rate(item):
        mean = stats.per_item_mean.get(item)
        return fallback if mean is None else round_half_up(mean)
    return rate


def generate_random_attack(m: RatingMatrix, stats: DatasetStats, cfg: AttackConfig):
    _validate_targets(m, cfg)
    pool = set(m.item_ids.tolist()) - set(cfg.target_items)
    rating = _global_rating(stats)
    return _build(m, cfg, pool, {}, lambda item: rating)


def generate_average_attack(m: RatingMatrix, stats: DatasetStats, cfg: AttackConfig):
    _validate_targets(m, cfg)
    pool = set(m.item_ids.tolist()) - set(cfg.target_items)
    return _build(m, cfg, pool, {}, _item_rating(stats))


def generate_bandwagon_attack(m: RatingMatrix, stats: DatasetStats, cfg: AttackConfig):
    _validate_targets(m, cfg)
    if cfg.selected_count >= m.n_items - len(cfg.target_items):
        raise ValidationError(
            f"selected_count {cfg.selected_count} leaves no room for fillers")
    targets = set(cfg.target_items)
    ranked = [i for i in popularity_ranking(m, stats) if i not in targets]
    selected = {i: R_MAX for i in ranked[:cfg.selected_count]}
    pool = set(m.item_ids.tolist()) - targets - set(selected)
    if cfg.filler_rule == "average":
        rate = _item_rating(stats)
    else:
        r = _global_rating(stats)
        rate = lambda item: r  # noqa: E731
    return _build(m, cfg, pool, selected, rate)


def generate_segment_attack(m: RatingMatrix, stats: DatasetStats, cfg: AttackConfig):
    _validate_targets(m, cfg)
    if m.item_genres is None:
        raise CapabilityError("segment attack needs item genre metadata")
    targets = set(cfg.target_items)
    segment = set(m.items_with_genre(cfg.segment_genre))
    if not segment - targets:
        raise ValidationError(f"no non-target items carry genre {cfg.segment_genre!r}")
    off_genre = [t for t in cfg.target_items if t not in segment]
    if off_genre:
        log.warning("targets %s do not carry genre %r", off_genre, cfg.segment_genre)
    ranked = [i for i in popularity_ranking(m, stats) if i in segment and i not in targets]
    selected = {i: R_MAX for i in ranked[:cfg.selected_count]}
    pool = set(m.item_ids.tolist()) - targets - segment
    return _build(m, cfg, pool, selected, lambda item: R_MIN)


GENERATORS = {
    "random": generate_random_attack,
    "average": generate_average_attack,
    "bandwagon": generate_bandwagon_attack,
    "segment": generate_segment_attack,
}


def generate_attack(m: RatingMatrix, stats: DatasetStats, cfg: AttackConfig):
    return GENERATORS[cfg.model](m, stats, cfg)


@dataclass
class AttackSummary:
    n_profiles: int
    n_ratings: int
    section_counts: dict
    histogram: dict

    def to_dict(self) -> dict:
        return {
            "n_profiles": self.n_profiles,
            "n_ratings": self.n_ratings,
            "section_counts": {k: list(v) for k, v in self.section_counts.items()},
            "histogram": {str(k): v for k, v in self.histogram.items()},
        }


def describe_attack(profiles: list[ShillingProfile]) -> AttackSummary:
    """Profile count, (min, max) items per section, and a rating histogram."""
    section_counts = {}
    for section in ("selected", "filler", "target"):
        sizes = [len(getattr(p, section)) for p in profiles]
        section_counts[section] = (min(sizes), max(sizes)) if sizes else (0, 0)
    hist = Counter()
    for p in profiles:
        hist.update(p.all_ratings().values())
    histogram = {r: hist.get(r, 0) for r in range(R_MIN, R_MAX + 1)}
    return AttackSummary(len(profiles), sum(histogram.values()), section_counts, histogram)
