#!/usr/bin/env python3
"""Fetch the MovieLens-100K ratings file into data/ml-100k/u.data.

Tries the GroupLens download first.  When that host is unreachable (for
example behind a package-mirror-only network), falls back to extracting the
identical interaction data bundled inside the RecBole wheel on PyPI, which
ships ML-100K as its example dataset.  Either path ends with the canonical
100,000-line tab-separated file and a record-count check.
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
RECBOLE_INTER = "recbole/dataset_example/ml-100k/ml-100k.inter"
EXPECTED_RECORDS = 100_000


def from_grouplens(dest: Path) -> bool:
    try:
        with urllib.request.urlopen(GROUPLENS_URL, timeout=30) as resp:
            payload = resp.read()
    except OSError as exc:
        print(f"grouplens download failed ({exc}); trying the PyPI fallback")
        return False
    with zipfile.ZipFile(io.BytesIO(payload)) as zf:
        dest.write_bytes(zf.read("ml-100k/u.data"))
    return True


def from_recbole_wheel(dest: Path) -> bool:
    with tempfile.TemporaryDirectory() as tmp:
        cmd = [
            sys.executable, "-m", "pip", "download", "recbole",
            "--no-deps", "--no-build-isolation", "-d", tmp,
        ]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            print(proc.stderr.strip().splitlines()[-1] if proc.stderr else "pip download failed")
            return False
        wheels = sorted(Path(tmp).glob("recbole-*"))
        if not wheels:
            return False
        with zipfile.ZipFile(wheels[0]) as zf:
            raw = zf.read(RECBOLE_INTER).decode("utf-8")
    lines = raw.strip().split("\n")[1:]  # drop the column-header line
    converted = []
    for line in lines:
        user, item, rating, timestamp = line.split("\t")
        converted.append(
            f"{int(float(user))}\t{int(float(item))}\t{int(float(rating))}\t{int(float(timestamp))}"
        )
    dest.write_text("\n".join(converted) + "\n", encoding="utf-8")
    return True


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--dest", default="data/ml-100k/u.data",
        help="where to write the ratings file (default: data/ml-100k/u.data)",
    )
    args = parser.parse_args()
    dest = Path(args.dest)
    if dest.exists():
        print(f"{dest} already exists; leaving it untouched")
        return 0
    dest.parent.mkdir(parents=True, exist_ok=True)
    if not from_grouplens(dest) and not from_recbole_wheel(dest):
        print("could not obtain ML-100K from any source", file=sys.stderr)
        return 1
    n_lines = sum(1 for _ in dest.open("r", encoding="utf-8"))
    if n_lines != EXPECTED_RECORDS:
        print(f"unexpected record count {n_lines} in {dest}", file=sys.stderr)
        return 1
    print(f"wrote {dest} ({n_lines} ratings)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
