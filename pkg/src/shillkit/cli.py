"""Command line entry point: ``shillkit {inspect,attack,detect,experiment}``.

Settings come from built-in defaults, then an optional flat ``key = value``
config file (``--config``), then command line flags; later sources win.
Progress and diagnostics go to stderr; results go to stdout or files.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import AttackConfig, describe_attack, generate_attack, popularity_ranking
from .detection import DetectionConfig, detect_shilling
from .errors import DatasetParseError, ShillkitError, ValidationError
from .evaluation import (GroundTruth, build_grid, results_to_csv, results_to_json, run_grid,
                         score_detection)
from .ratings import (RatingMatrix, compute_stats, inject_profiles, load_movielens,
                      remove_users, write_ratings)
from .recommenders import SVD, PredictionModel

log = logging.getLogger("shillkit")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_IO = 4
EXIT_RUNTIME = 5

RATINGS_FILE = "ratings.tsv"
LABELS_FILE = "injected_users.txt"

DEFAULTS = {
    "dataset": None,
    "items": None,
    "labels": None,
    "output_dir": "out",
    "seed": 0,
    "workers": 1,
    "top": 10,
    # attack
    "model": "random",
    "intent": "push",
    "attack_size": 0.05,
    "filler_size": 0.05,
    "targets": None,
    "n_targets": 5,
    "selected_count": 10,
    "segment_genre": None,
    "jitter": 0.0,
    "filler_rule": "random",
    # detection
    "correlation_threshold": 0.95,
    "profile_threshold": "10%",
    "min_overlap": 3,
    "remove_flagged": False,
    # experiment
    "models": "random,average,bandwagon",
    "intents": "push,nuke",
    "attack_sizes": "5%,10%,15%,20%,25%",
    "filler_sizes": "5%,10%,15%",
    "engines": "user,item",
    "rank": 10,
}


# -- value parsing -------------------------------------------------------

def parse_fraction(text) -> float:
    """'10%' -> 0.1, '0.1' -> 0.1."""
    if isinstance(text, (int, float)):
        return float(text)
    text = str(text).strip()
    try:
        if text.endswith("%"):
            return float(text[:-1]) / 100
        return float(text)
    except ValueError:
        raise ValidationError(f"not a fraction or percentage: {text!r}") from None


def parse_profile_threshold(text):
    """'10%' or '0.1' -> fraction (float); '95' -> count (int)."""
    if isinstance(text, (int, float)):
        return text
    text = str(text).strip()
    if text.endswith("%") or "." in text:
        return parse_fraction(text)
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"bad profile threshold {text!r}") from None


def parse_list(text, conv=str) -> list:
    if isinstance(text, (list, tuple)):
        return [conv(x) for x in text]
    return [conv(x.strip()) for x in str(text).split(",") if x.strip()]


def _int(text, name):
    try:
        return int(text)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be an integer, got {text!r}") from None


def _float(text, name):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a number, got {text!r}") from None


def read_config_file(path) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    text = Path(path).read_text()
    try:
        parser.read_string("[run]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ValidationError(f"bad config file {path}: {exc}") from None
    out = {}
    for key, value in parser["run"].items():
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise ValidationError(f"unknown config key {key!r} in {path}")
        out[key] = value
    return out


def resolve_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        settings.update(read_config_file(args.config))
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            settings[key] = value
    if not settings["dataset"]:
        raise ValidationError("a dataset path is required (--dataset or config 'dataset')")
    return settings


# -- helpers -------------------------------------------------------------

def sample_unpopular_targets(m: RatingMatrix, k: int, seed: int) -> list[int]:
    """Draw ``k`` items whose rating count is strictly below the median count."""
    stats = compute_stats(m)
    counts = np.array([stats.per_item_count[i] for i in m.item_ids.tolist()])
    pool = m.item_ids[counts < np.median(counts)]
    if len(pool) < k:
        raise ValidationError(f"only {len(pool)} below-median items; cannot pick {k} targets")
    rng = np.random.default_rng(seed)
    return sorted(int(i) for i in rng.choice(pool, size=k, replace=False))


def _targets(settings, m: RatingMatrix) -> list[int]:
    if settings["targets"]:
        return parse_list(settings["targets"], int)
    return sample_unpopular_targets(m, _int(settings["n_targets"], "n_targets"),
                                    _int(settings["seed"], "seed"))


def _detection_config(settings) -> DetectionConfig:
    return DetectionConfig(
        correlation_threshold=_float(settings["correlation_threshold"], "correlation_threshold"),
        profile_threshold=parse_profile_threshold(settings["profile_threshold"]),
        min_overlap=_int(settings["min_overlap"], "min_overlap"),
    )


def _load(settings) -> RatingMatrix:
    return load_movielens(settings["dataset"], settings["items"], settings.get("labels"))


def _output_dir(settings) -> Path:
    out = Path(settings["output_dir"])
    inputs = {Path(p).resolve() for p in (settings["dataset"], settings["items"],
                                          settings.get("labels")) if p}
    if any(p.parent == out.resolve() for p in inputs):
        raise ValidationError(f"output directory {out} holds an input file; pick another")
    return out


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


# where and how fast a run executes never changes its results
_NOT_ECHOED = {"output_dir", "workers", "json"}


def _echo_settings(settings) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v)
            for k, v in sorted(settings.items()) if k not in _NOT_ECHOED}


# -- commands ------------------------------------------------------------

def cmd_inspect(settings) -> int:
    m = _load(settings)
    stats = compute_stats(m)
    top = popularity_ranking(m, stats)[:_int(settings["top"], "top")] if m.n_items else []
    doc = {
        "n_users": stats.n_users,
        "n_authentic": m.n_authentic,
        "n_items": stats.n_items,
        "n_ratings": stats.n_ratings,
        "global_mean": stats.global_mean,
        "top_items": [{"item": i, "count": stats.per_item_count[i],
                       "mean": stats.per_item_mean.get(i)} for i in top],
    }
    if settings.get("json"):
        print(_dump(doc))
        return EXIT_OK
    print(f"users:       {doc['n_users']}")
    print(f"items:       {doc['n_items']}")
    print(f"ratings:     {doc['n_ratings']}")
    gm = doc["global_mean"]
    print(f"global mean: {'NA' if gm is None else f'{gm:.6f}'}")
    if top:
        print("most rated items:")
        for row in doc["top_items"]:
            print(f"  {row['item']:>6}  {row['count']:>5} ratings  mean {row['mean']:.3f}")
    return EXIT_OK


def _attack_config(settings, targets, model=None) -> AttackConfig:
    return AttackConfig(
        model=model or settings["model"],
        intent=settings["intent"],
        attack_size=parse_fraction(settings["attack_size"]),
        filler_size=parse_fraction(settings["filler_size"]),
        target_items=tuple(targets),
        selected_count=_int(settings["selected_count"], "selected_count"),
        segment_genre=settings["segment_genre"],
        seed=_int(settings["seed"], "seed"),
        jitter_sigma=_float(settings["jitter"], "jitter"),
        filler_rule=settings["filler_rule"],
    )


def cmd_attack(settings) -> int:
    m = _load(settings)
    targets = _targets(settings, m)
    cfg = _attack_config(settings, targets)
    stats = compute_stats(m)
    profiles = generate_attack(m, stats, cfg)
    post = inject_profiles(m, profiles)

    out = _output_dir(settings)
    out.mkdir(parents=True, exist_ok=True)
    write_ratings(post, out / RATINGS_FILE, out / LABELS_FILE)
    summary = describe_attack(profiles).to_dict()
    doc = {"settings": _echo_settings(settings), "attack_config": cfg.to_dict(),
           "summary": summary, "n_users": post.n_users, "n_authentic": post.n_authentic}
    (out / "attack.json").write_text(_dump(doc) + "\n")
    log.info("wrote %d profiles to %s", len(profiles), out)
    print(_dump(summary))
    return EXIT_OK


def cmd_detect(settings) -> int:
    cfg = _detection_config(settings)
    m = _load(settings)
    if settings.get("labels") is None:
        log.warning("no label sidecar given; the report will not include scores")
    report = detect_shilling(m, cfg, workers=_int(settings["workers"], "workers"))
    doc = {"settings": _echo_settings(settings), "report": report.to_dict()}
    if m.labels_known:
        doc["score"] = score_detection(report, GroundTruth.from_matrix(m)).to_dict()

    out = _output_dir(settings)
    out.mkdir(parents=True, exist_ok=True)
    (out / "detection.json").write_text(_dump(doc) + "\n")
    if settings.get("remove_flagged"):
        write_ratings(remove_users(m, report.flagged), out / "filtered.tsv",
                      out / "filtered_injected_users.txt")
    brief = {"n_users": m.n_users, "n_flagged": len(report.flagged),
             "resolved_profile_threshold": report.resolved_profile_threshold,
             "score": doc.get("score")}
    print(_dump(brief))
    return EXIT_OK


def _engines(settings) -> list[PredictionModel]:
    engines = []
    for kind in parse_list(settings["engines"]):
        rank = _int(settings["rank"], "rank") if kind == SVD else None
        engines.append(PredictionModel(kind, svd_rank=rank))
    return engines


def _summary_text(results) -> str:
    def key(r):
        f = r.score.f_measure if r.score and r.score.f_measure is not None else -1.0
        a = r.attack_config
        return (-f, a.model, a.intent, a.attack_size, a.filler_size)

    lines = ["cells ranked by F-measure (NA = undefined)", ""]
    head = f"{'model':<10} {'intent':<6} {'attack':>7} {'filler':>7} {'prec':>6} {'recall':>6} {'F':>6}  rmse shift (user/item/svd)"
    lines.append(head)
    lines.append("-" * len(head))

    def f(x):
        return "NA" if x is None else f"{x:.3f}"
    for r in sorted(results, key=key):
        a, s, i = r.attack_config, r.score, r.impact
        if r.error:
            lines.append(f"{a.model:<10} {a.intent:<6} {a.attack_size:>7.2%} {a.filler_size:>7.2%}  ERROR {r.error}")
            continue
        shifts = "/".join(f(getattr(i, k)) if i else "NA" for k in
                          ("rmse_shift_user_based", "rmse_shift_item_based", "rmse_shift_svd"))
        lines.append(f"{a.model:<10} {a.intent:<6} {a.attack_size:>7.2%} {a.filler_size:>7.2%} "
                     f"{f(s.precision):>6} {f(s.recall):>6} {f(s.f_measure):>6}  {shifts}")
    return "\n".join(lines) + "\n"


def cmd_experiment(settings) -> int:
    m = _load(settings)
    models = parse_list(settings["models"])
    intents = parse_list(settings["intents"])
    attack_sizes = parse_list(settings["attack_sizes"], parse_fraction)
    filler_sizes = parse_list(settings["filler_sizes"], parse_fraction)
    if not (models and intents and attack_sizes and filler_sizes):
        raise ValidationError("the experiment grid is empty")
    targets = _targets(settings, m)
    detection = _detection_config(settings)
    engines = _engines(settings)
    seed = _int(settings["seed"], "seed")
    grid = build_grid(models, intents, attack_sizes, filler_sizes, targets, seed,
                      detection=detection,
                      selected_count=_int(settings["selected_count"], "selected_count"),
                      segment_genre=settings["segment_genre"],
                      jitter_sigma=_float(settings["jitter"], "jitter"),
                      filler_rule=settings["filler_rule"])

    def progress(done, total, res):
        a = res.attack_config
        status = "error" if res.error else f"F={res.score.f_measure}"
        print(f"[{done}/{total}] {a.model} {a.intent} {a.attack_size:.0%}/{a.filler_size:.0%} {status}",
              file=sys.stderr)

    start = time.perf_counter()
    results = run_grid(m, grid, engines, workers=_int(settings["workers"], "workers"),
                       progress=progress)
    header = {"settings": _echo_settings(settings), "target_items": targets,
              "detection_config": detection.to_dict(),
              "engines": [e.__dict__ for e in engines], "base_seed": seed}

    out = _output_dir(settings)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.json").write_text(results_to_json(results, header) + "\n")
    (out / "results.csv").write_text(results_to_csv(results, header))
    (out / "summary.txt").write_text(_summary_text(results))
    timings = {"total_s": time.perf_counter() - start,
               "cells": [r.timings for r in results]}
    (out / "timings.json").write_text(_dump(timings) + "\n")
    failed = sum(1 for r in results if r.error)
    print(_dump({"cells": len(results), "failed": failed, "output_dir": str(out)}))
    return EXIT_OK


COMMANDS = {
    "inspect": cmd_inspect,
    "attack": cmd_attack,
    "detect": cmd_detect,
    "experiment": cmd_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shillkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value settings file")
    common.add_argument("--dataset", help="ratings file in u.data format")
    common.add_argument("--items", help="u.item metadata file (genres)")
    common.add_argument("--output-dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("-v", "--verbose", action="count", default=0)

    attack_opts = argparse.ArgumentParser(add_help=False)
    attack_opts.add_argument("--intent", choices=["push", "nuke"])
    attack_opts.add_argument("--targets", help="comma-separated target item ids")
    attack_opts.add_argument("--n-targets", type=int,
                             help="sample this many below-median-popularity targets")
    attack_opts.add_argument("--selected-count", type=int)
    attack_opts.add_argument("--segment-genre")
    attack_opts.add_argument("--jitter", type=float, help="filler rating noise sigma")
    attack_opts.add_argument("--filler-rule", choices=["random", "average"])

    detect_opts = argparse.ArgumentParser(add_help=False)
    detect_opts.add_argument("--correlation-threshold", type=float)
    detect_opts.add_argument("--profile-threshold", help="'10%%', fraction, or integer count")
    detect_opts.add_argument("--min-overlap", type=int)

    p = sub.add_parser("inspect", parents=[common], help="print dataset statistics")
    p.add_argument("--labels", help="injected-user sidecar file")
    p.add_argument("--top", type=int)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("attack", parents=[common, attack_opts], help="inject shilling profiles")
    p.add_argument("--model", choices=["random", "average", "bandwagon", "segment"])
    p.add_argument("--attack-size")
    p.add_argument("--filler-size")

    p = sub.add_parser("detect", parents=[common, detect_opts], help="run the detector")
    p.add_argument("--labels", help="injected-user sidecar file (enables scoring)")
    p.add_argument("--remove-flagged", action="store_true", default=None,
                   help="also write the dataset with flagged users removed")

    p = sub.add_parser("experiment", parents=[common, attack_opts, detect_opts],
                       help="run an attack x detection grid")
    p.add_argument("--models")
    p.add_argument("--intents")
    p.add_argument("--attack-sizes")
    p.add_argument("--filler-sizes")
    p.add_argument("--engines", help="comma list of user,item,svd")
    p.add_argument("--rank", type=int, help="SVD rank")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        settings = resolve_settings(args)
        settings["json"] = getattr(args, "json", False)
        return COMMANDS[args.command](settings)
    except DatasetParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ShillkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception:
        log.exception("unexpected failure")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
