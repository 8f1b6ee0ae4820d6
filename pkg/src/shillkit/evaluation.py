"""Detection scoring, attack impact and the experiment grid runner."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .attacks import INTENTS, MODELS, AttackConfig, generate_attack
from .detection import DetectionConfig, DetectionReport, detect_shilling
from .errors import ValidationError
from .ratings import DatasetStats, RatingMatrix, compute_stats, inject_profiles
from .recommenders import ITEM_BASED, SVD, USER_BASED, PredictionModel, make_predictor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundTruth:
    shilling_users: frozenset

    @classmethod
    def from_matrix(cls, m: RatingMatrix) -> "GroundTruth":
        return cls(frozenset(m.injected_ids))


@dataclass(frozen=True)
class DetectionScore:
    precision: Optional[float]
    recall: Optional[float]
    f_measure: Optional[float]
    true_positives: int
    false_positives: int
    false_negatives: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f_measure": self.f_measure,
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
        }


def f_measure(precision: Optional[float], recall: Optional[float]) -> Optional[float]:
    if precision is None or recall is None:
        return None
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def score_detection(report, truth: GroundTruth) -> DetectionScore:
    """Precision/recall/F of ``report.flagged`` (or any iterable of ids).

    A ratio whose denominator is zero is reported as None, never 0 or 1.
    """
    flagged = set(report.flagged if isinstance(report, DetectionReport) else report)
    actual = set(truth.shilling_users)
    tp = len(flagged & actual)
    fp = len(flagged - actual)
    fn = len(actual - flagged)
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    return DetectionScore(precision, recall, f_measure(precision, recall), tp, fp, fn)


def rmse_shift(pre: Mapping, post: Mapping, targets: Iterable[int]) -> float:
    """RMS difference between two ``{(user, item): prediction}`` tables on ``targets``."""
    targets = set(targets)
    pre_keys = {k for k in pre if k[1] in targets}
    post_keys = {k for k in post if k[1] in targets}
    if pre_keys != post_keys:
        raise ValidationError(
            f"prediction tables cover different pairs ({len(pre_keys ^ post_keys)} differ)")
    if not pre_keys:
        raise ValidationError("no (user, target) pairs to compare")
    keys = sorted(pre_keys)
    diff = np.array([post[k] - pre[k] for k in keys], dtype=np.float64)
    scale = np.abs(diff).max()
    if scale == 0:
        return 0.0
    # scaled to avoid underflow of tiny squared differences
    return float(scale * math.sqrt(np.mean((diff / scale) ** 2)))


@dataclass
class ImpactScore:
    rmse_shift_user_based: Optional[float]
    rmse_shift_item_based: Optional[float]
    rmse_shift_svd: Optional[float]
    target_items: list
    prediction_count: int
    skipped_rated: int = 0
    skipped_failed: int = 0

    def to_dict(self) -> dict:
        return {
            "rmse_shift_user_based": self.rmse_shift_user_based,
            "rmse_shift_item_based": self.rmse_shift_item_based,
            "rmse_shift_svd": self.rmse_shift_svd,
            "target_items": list(self.target_items),
            "prediction_count": self.prediction_count,
            "skipped_rated": self.skipped_rated,
            "skipped_failed": self.skipped_failed,
        }


@dataclass
class _PairPlan:
    pairs: list
    users: list
    skipped_rated: int
    skipped_failed: int


def _plan_pairs(m_pre: RatingMatrix, targets: Sequence[int]) -> _PairPlan:
    """(authentic user, target) pairs to predict; rated cells and cold users are skipped."""
    users, pairs = [], []
    skipped_rated = skipped_failed = 0
    rated_any = m_pre.mask.any(axis=1)
    tpos = [m_pre.item_pos(t) for t in targets]
    for upos in np.flatnonzero(m_pre.authentic):
        u = int(m_pre.user_ids[upos])
        if not rated_any[upos]:
            skipped_failed += len(targets)
            continue
        users.append(u)
        for t, ip in zip(targets, tpos):
            if m_pre.mask[upos, ip]:
                skipped_rated += 1
            else:
                pairs.append((u, int(t)))
    if skipped_rated:
        log.info("skipped %d (user, target) pairs already rated", skipped_rated)
    if skipped_failed:
        log.info("skipped %d pairs for users without ratings", skipped_failed)
    return _PairPlan(pairs, users, skipped_rated, skipped_failed)


def prediction_table(m: RatingMatrix, engine: PredictionModel, users: Sequence[int],
                     targets: Sequence[int], pairs: Iterable, stats: DatasetStats = None) -> dict:
    pred = make_predictor(m, engine, stats).predict_many(users, targets)
    upos = {u: k for k, u in enumerate(users)}
    tpos = {t: k for k, t in enumerate(targets)}
    return {(u, t): float(pred[upos[u], tpos[t]]) for u, t in pairs}


def _field_for(kind: str) -> str:
    return {USER_BASED: "rmse_shift_user_based", ITEM_BASED: "rmse_shift_item_based",
            SVD: "rmse_shift_svd"}[kind]


def measure_impact(m_pre: RatingMatrix, m_post: RatingMatrix, targets: Sequence[int],
                   engines: Sequence[PredictionModel], pre_tables: dict = None) -> ImpactScore:
    """RMSE shift of target predictions for authentic users, per engine.

    ``pre_tables`` may carry already-computed pre-attack tables keyed by
    engine, so a grid does not recompute them for every cell.
    """
    targets = [int(t) for t in targets]
    if not targets:
        raise ValidationError("at least one target item is required")
    plan = _plan_pairs(m_pre, targets)
    shifts = {"rmse_shift_user_based": None, "rmse_shift_item_based": None,
              "rmse_shift_svd": None}
    if plan.pairs:
        for engine in engines:
            if pre_tables is not None and engine in pre_tables:
                pre = pre_tables[engine]
            else:
                pre = prediction_table(m_pre, engine, plan.users, targets, plan.pairs)
            post = prediction_table(m_post, engine, plan.users, targets, plan.pairs)
            shifts[_field_for(engine.kind)] = rmse_shift(pre, post, targets)
    return ImpactScore(target_items=targets, prediction_count=len(plan.pairs),
                       skipped_rated=plan.skipped_rated, skipped_failed=plan.skipped_failed,
                       **shifts)


# -- grid ----------------------------------------------------------------

def cell_seed(base_seed: int, model: str, intent: str, attack_size: float,
              filler_size: float) -> int:
    """Seed for one grid cell.

    Mixing rule: SeedSequence([base_seed, model index, intent index,
    round(attack_size * 1e4), round(filler_size * 1e4)]), first 32-bit word.
    """
    entropy = [int(base_seed), MODELS.index(model), INTENTS.index(intent),
               int(round(attack_size * 10_000)), int(round(filler_size * 10_000))]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def build_grid(models: Sequence[str], intents: Sequence[str], attack_sizes: Sequence[float],
               filler_sizes: Sequence[float], target_items: Sequence[int], base_seed: int,
               detection: DetectionConfig = DetectionConfig(), **attack_kw) -> list:
    """Cartesian grid of ``(AttackConfig, DetectionConfig)`` cells in canonical order."""
    cells = []
    for model, intent, a, f in product(models, intents, attack_sizes, filler_sizes):
        cfg = AttackConfig(model=model, intent=intent, attack_size=a, filler_size=f,
                           target_items=tuple(target_items),
                           seed=cell_seed(base_seed, model, intent, a, f), **attack_kw)
        cells.append((cfg, detection))
    return cells


@dataclass
class ExperimentResult:
    attack_config: AttackConfig
    detection_config: DetectionConfig
    score: Optional[DetectionScore] = None
    impact: Optional[ImpactScore] = None
    n_profiles: int = 0
    resolved_profile_threshold: Optional[int] = None
    error: Optional[str] = None
    timings: dict = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> dict:
        doc = {
            "attack_config": self.attack_config.to_dict(),
            "detection_config": self.detection_config.to_dict(),
            "n_profiles": self.n_profiles,
            "resolved_profile_threshold": self.resolved_profile_threshold,
            "score": self.score.to_dict() if self.score else None,
            "impact": self.impact.to_dict() if self.impact else None,
            "error": self.error,
        }
        if include_timings:
            doc["timings"] = dict(self.timings)
        return doc


def run_cell(base: RatingMatrix, stats: DatasetStats, attack: AttackConfig,
             detection: DetectionConfig, engines: Sequence[PredictionModel],
             pre_tables: dict = None, workers: int = 1) -> ExperimentResult:
    result = ExperimentResult(attack, detection)
    clock = time.perf_counter
    try:
        t0 = clock()
        profiles = generate_attack(base, stats, attack)
        post = inject_profiles(base, profiles)
        result.n_profiles = len(profiles)
        t1 = clock()
        report = detect_shilling(post, detection, workers=workers)
        result.resolved_profile_threshold = report.resolved_profile_threshold
        result.score = score_detection(report, GroundTruth.from_matrix(post))
        t2 = clock()
        if engines:
            result.impact = measure_impact(base, post, attack.target_items, engines,
                                           pre_tables=pre_tables)
        t3 = clock()
        result.timings = {"attack_s": t1 - t0, "detect_s": t2 - t1, "impact_s": t3 - t2}
    except Exception as exc:  # per-cell failure is recorded, the grid carries on
        log.exception("cell %s failed", attack.to_dict())
        result.error = f"{type(exc).__name__}: {exc}"
    return result


_worker_state = {}


def _init_worker(base, stats, engines, pre_tables):
    _worker_state.update(base=base, stats=stats, engines=engines, pre_tables=pre_tables)


def _run_indexed(cell):
    attack, detection = cell
    s = _worker_state
    return run_cell(s["base"], s["stats"], attack, detection, s["engines"], s["pre_tables"])


def run_grid(base: RatingMatrix, grid: Sequence[tuple], engines: Sequence[PredictionModel] = (),
             workers: int = 1, progress=None) -> list[ExperimentResult]:
    """One ExperimentResult per ``(AttackConfig, DetectionConfig)`` cell, in grid order."""
    grid = list(grid)
    if not grid:
        return []
    stats = compute_stats(base)
    engines = list(engines)

    # pre-attack predictions depend only on (engine, targets); compute once per target set
    pre_cache = {}
    for attack, _ in grid:
        key = tuple(attack.target_items)
        if key in pre_cache or not engines:
            continue
        plan = _plan_pairs(base, list(key))
        pre_cache[key] = {e: prediction_table(base, e, plan.users, list(key), plan.pairs, stats)
                          for e in engines} if plan.pairs else {}

    def tables_for(attack):
        return pre_cache.get(tuple(attack.target_items))

    results = []
    if workers > 1:
        # one shared cache is only valid when every cell has the same targets
        shared = pre_cache if len(pre_cache) == 1 else {}
        shared_tables = next(iter(shared.values())) if shared else None
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(base, stats, engines, shared_tables)) as pool:
            for k, res in enumerate(pool.map(_run_indexed, grid)):
                results.append(res)
                if progress:
                    progress(k + 1, len(grid), res)
    else:
        for k, (attack, detection) in enumerate(grid):
            res = run_cell(base, stats, attack, detection, engines, tables_for(attack))
            results.append(res)
            if progress:
                progress(k + 1, len(grid), res)
    return results


# -- serialisation -------------------------------------------------------

CSV_COLUMNS = ["model", "intent", "attack_size", "filler_size", "n_profiles",
               "profile_threshold", "true_positives", "false_positives", "false_negatives",
               "precision", "recall", "f_measure", "rmse_shift_user_based",
               "rmse_shift_item_based", "rmse_shift_svd", "error"]


def _fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def results_to_rows(results: Sequence[ExperimentResult]) -> list[dict]:
    rows = []
    for r in results:
        a = r.attack_config
        s = r.score.to_dict() if r.score else {}
        i = r.impact.to_dict() if r.impact else {}
        row = {
            "model": a.model, "intent": a.intent,
            "attack_size": a.attack_size, "filler_size": a.filler_size,
            "n_profiles": r.n_profiles,
            "profile_threshold": r.resolved_profile_threshold,
            "error": r.error or "",
        }
        for key in ("true_positives", "false_positives", "false_negatives",
                    "precision", "recall", "f_measure"):
            row[key] = s.get(key)
        for key in ("rmse_shift_user_based", "rmse_shift_item_based", "rmse_shift_svd"):
            row[key] = i.get(key)
        rows.append(row)
    return rows


def results_to_csv(results: Sequence[ExperimentResult], header: dict = None) -> str:
    """Flat table, one row per cell. ``header`` is embedded as '#' comment lines."""
    buf = io.StringIO()
    if header is not None:
        for line in json.dumps(header, sort_keys=True).splitlines():
            buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in results_to_rows(results):
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def results_to_json(results: Sequence[ExperimentResult], header: dict = None) -> str:
    doc = {"config": header, "results": [r.to_dict() for r in results]}
    return json.dumps(doc, indent=2, sort_keys=True)
