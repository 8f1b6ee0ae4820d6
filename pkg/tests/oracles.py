"""Brute-force reference implementations used as test oracles.

Nothing here imports shillkit. Everything works on plain dicts
``{user: {item: rating}}`` and evaluates formulas term by term.
"""
import csv
import math

import numpy as np

GENRES = ["unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
          "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
          "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western"]


def read_tsv(path):
    table = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh, delimiter="\t"):
            if row:
                table.setdefault(int(row[0]), {})[int(row[1])] = int(row[2])
    return table


def read_genres(path):
    out = {}
    with open(path, encoding="latin-1") as fh:
        for line in fh:
            parts = line.rstrip("\n").split("|")
            out[int(parts[0])] = {g for g, f in zip(GENRES, parts[-19:]) if f == "1"}
    return out


def transpose(table):
    out = {}
    for u, row in table.items():
        for i, r in row.items():
            out.setdefault(i, {})[u] = r
    return out


def mean(xs):
    xs = list(xs)
    return sum(xs) / len(xs)


def cosine(va, vb, min_overlap=3):
    common = sorted(set(va) & set(vb))
    if len(common) < min_overlap:
        return 0.0
    dot = sum(va[k] * vb[k] for k in common)
    na = math.sqrt(sum(va[k] ** 2 for k in common))
    nb = math.sqrt(sum(vb[k] ** 2 for k in common))
    if na == 0 or nb == 0:
        return 0.0
    return dot / (na * nb)


def pearson(va, vb, min_overlap=3):
    common = sorted(set(va) & set(vb))
    if len(common) < min_overlap:
        return 0.0
    x = [va[k] for k in common]
    y = [vb[k] for k in common]
    mx, my = mean(x), mean(y)
    dx = [a - mx for a in x]
    dy = [b - my for b in y]
    sxx = sum(d * d for d in dx)
    syy = sum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        return 0.0
    return sum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)


def clamp(x):
    return min(max(x, 1.0), 5.0)


def predict_user_based(table, k, item, min_overlap=3):
    mean_k = mean(table[k].values())
    num = den = 0.0
    for u, row in table.items():
        if u == k or item not in row:
            continue
        s = cosine(table[k], row, min_overlap)
        num += s * (row[item] - mean(row.values()))
        den += abs(s)
    if den == 0:
        return clamp(mean_k)
    return clamp(mean_k + num / den)


def predict_item_based(table, k, item, min_overlap=3):
    cols = transpose(table)
    num = den = 0.0
    for b, r in table[k].items():
        if b == item:
            continue
        s = cosine(cols.get(item, {}), cols[b], min_overlap)
        num += s * r
        den += abs(s)
    if den == 0:
        return clamp(mean(table[k].values()))
    return clamp(num / den)


def detect(table, corr_threshold, profile_threshold, min_overlap=3):
    flagged = set()
    counts = {}
    for a in table:
        c = sum(1 for b in table if b != a
                and pearson(table[a], table[b], min_overlap) > corr_threshold)
        counts[a] = c
        if c > profile_threshold:
            flagged.add(a)
    return flagged, counts


def prf(flagged, truth):
    tp = len(flagged & truth)
    fp = len(flagged - truth)
    fn = len(truth - flagged)
    p = tp / (tp + fp) if tp + fp else None
    r = tp / (tp + fn) if tp + fn else None
    if p is None or r is None:
        f = None
    elif p + r == 0:
        f = 0.0
    else:
        f = 2 * p * r / (p + r)
    return p, r, f


def rmse(pre, post):
    diffs = [post[k] - pre[k] for k in pre]
    return math.sqrt(sum(d * d for d in diffs) / len(diffs))


def densify_item_mean(table):
    users = sorted(table)
    items = sorted({i for row in table.values() for i in row})
    cols = transpose(table)
    return [[table[u].get(i, mean(cols[i].values())) for i in items] for u in users]


def singular_values_via_gram(X):
    """Square roots of the eigenvalues of X^T X, descending."""
    X = np.asarray(X, dtype=float)
    eig = np.linalg.eigvalsh(X.T @ X)
    return np.sqrt(np.clip(eig[::-1], 0, None))


def round_half_up(x):
    return int(math.floor(x + 0.5))


def reference_attack(table, model, intent, attack_size, filler_size, targets, seed,
                     selected_count=10, genres=None, segment_genre=None):
    """Replays the documented sampling protocol with zero jitter."""
    items = sorted({i for row in table.values() for i in row})
    cols = transpose(table)
    n_profiles = round_half_up(attack_size * len(table))
    n_fillers = round_half_up(filler_size * len(items))
    all_ratings = [r for row in table.values() for r in row.values()]
    gm = sum(all_ratings) / len(all_ratings)
    item_mean = {i: mean(cols[i].values()) for i in cols}
    target_rating = 5 if intent == "push" else 1

    selected = []
    excluded = set(targets)
    popularity = sorted(items, key=lambda i: (-len(cols.get(i, {})),
                                              -item_mean.get(i, gm), i))
    if model == "bandwagon":
        selected = [i for i in popularity if i not in targets][:selected_count]
    if model == "segment":
        segment = {i for i in items if segment_genre in genres.get(i, set())}
        selected = [i for i in popularity if i in segment and i not in targets][:selected_count]
        excluded |= segment
    pool = [i for i in items if i not in excluded and i not in selected]
    n_fillers = min(n_fillers, len(pool))

    rng = np.random.default_rng(seed)
    first = max(table) + 1
    out = []
    for k in range(n_profiles):
        fillers = sorted(int(i) for i in rng.choice(np.array(pool, dtype=np.int64),
                                                    size=n_fillers, replace=False))
        if model == "average":
            filler = {i: round_half_up(item_mean[i]) for i in fillers}
        elif model == "segment":
            filler = {i: 1 for i in fillers}
        else:
            filler = {i: round_half_up(gm) for i in fillers}
        out.append({
            "user": first + k,
            "selected": {i: 5 for i in selected},
            "filler": filler,
            "target": {t: target_rating for t in targets},
        })
    return out
