import io
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from erbm.dataset import RatingTable, parse_ratings, temporal_split

# Wall-clock deadlines are meaningless when the slow sweep saturates the box.
settings.register_profile("no_deadline", deadline=None)
settings.load_profile("no_deadline")

ML100K_PATH = Path(os.environ.get("ERBM_ML100K", "data/ml-100k/u.data"))


def make_table(rows, r_scale=5) -> RatingTable:
    """Table from (user_ext, item_ext, rating, timestamp) tuples."""
    text = "\n".join("\t".join(str(x) for x in row) for row in rows)
    return parse_ratings(io.StringIO(text + "\n"), r_scale=r_scale)


def random_table(n_users, n_items, density, seed, r_scale=5) -> RatingTable:
    """Random ratings table; every user rates at least one item."""
    rng = np.random.default_rng(seed)
    rows = []
    for u in range(n_users):
        rated = np.flatnonzero(rng.random(n_items) < density)
        if len(rated) == 0:
            rated = [int(rng.integers(n_items))]
        for i in rated:
            rows.append((u + 1, int(i) + 1, int(rng.integers(1, r_scale + 1)),
                         int(rng.integers(1, 10_000_000))))
    return make_table(rows, r_scale)


def blocky_table(n_users=60, n_items=40, seed=0) -> RatingTable:
    """Two taste groups with strong block structure, for training smoke tests."""
    rng = np.random.default_rng(seed)
    rows = []
    for u in range(n_users):
        group = u % 2
        for i in range(n_items):
            if rng.random() > 0.7:
                continue
            liked = (i < n_items // 2) == (group == 0)
            base = 5 if liked else 1
            rating = int(np.clip(base + rng.integers(-1, 2), 1, 5))
            rows.append((u + 1, i + 1, rating, 1000 + u * n_items + i))
    return make_table(rows)


@pytest.fixture(scope="session")
def ml100k_table() -> RatingTable:
    if not ML100K_PATH.exists():
        pytest.skip(
            f"ML-100K not found at {ML100K_PATH}; run scripts/fetch_ml100k.py "
            "or set ERBM_ML100K"
        )
    with open(ML100K_PATH, "r", encoding="utf-8") as fh:
        return parse_ratings(fh)


@pytest.fixture(scope="session")
def ml100k_split(ml100k_table):
    return temporal_split(ml100k_table, 0.1)
