"""Fetch MovieLens 100K into ``data/ml-100k`` as ``u.data`` and ``u.item``.

Tries the GroupLens archive first. Without direct internet access it falls
back to the copy bundled in the ``recbole`` wheel (fetched with
``pip download`` through whatever index pip is configured for) and rebuilds
the two canonical files from it: the interaction file keeps the original
line order, and the item file is rewritten with the 19 genre flags.

Usage::

    python scripts/fetch_movielens.py [--dest data/ml-100k]
"""
from __future__ import annotations

import argparse
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
RECBOLE_PREFIX = "recbole/dataset_example/ml-100k/"
GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
]


def from_grouplens(dest: Path) -> bool:
    try:
        with urllib.request.urlopen(GROUPLENS_URL, timeout=20) as resp:
            payload = resp.read()
    except OSError as exc:
        print(f"grouplens download failed: {exc}", file=sys.stderr)
        return False
    with zipfile.ZipFile(io.BytesIO(payload)) as zf:
        for name in ("u.data", "u.item"):
            (dest / name).write_bytes(zf.read(f"ml-100k/{name}"))
    return True


def from_recbole(dest: Path) -> bool:
    with tempfile.TemporaryDirectory() as tmp:
        cmd = [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
               "recbole==1.2.1", "-d", tmp]
        if subprocess.run(cmd).returncode != 0:
            return False
        wheel = next(Path(tmp).glob("recbole-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            inter = zf.read(RECBOLE_PREFIX + "ml-100k.inter").decode("latin-1")
            items = zf.read(RECBOLE_PREFIX + "ml-100k.item").decode("latin-1")

    # header line carries recbole's typed column names
    data_lines = inter.splitlines()[1:]
    (dest / "u.data").write_text("\n".join(data_lines) + "\n", encoding="latin-1")

    out = []
    for line in items.splitlines()[1:]:
        item_id, title, year, classes = line.split("\t")
        tags = set(classes.split())
        flags = ["1" if g in tags else "0" for g in GENRES]
        # release date and IMDb url are not carried by the bundle
        out.append("|".join([item_id, f"{title} ({year})" if year else title,
                             "", "", ""] + flags))
    (dest / "u.item").write_text("\n".join(out) + "\n", encoding="latin-1")
    return True


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dest", type=Path, default=Path("data/ml-100k"))
    args = parser.parse_args()
    args.dest.mkdir(parents=True, exist_ok=True)
    if from_grouplens(args.dest) or from_recbole(args.dest):
        print(f"wrote {args.dest / 'u.data'} and {args.dest / 'u.item'}")
        return 0
    print("could not obtain MovieLens 100K", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
