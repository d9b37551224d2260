"""User-user cosine neighborhoods and per-(user, item) explainability scores.

An item is explainable for a user to the degree that the user's nearest
neighbors rated it: score(u, i) = sum of neighbor ratings on i divided by
(neighbor count * rating-scale maximum), with missing ratings counted as 0.
Row u of the score matrix is the conditioning vector fed to the RBM.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import RatingMatrix

EXPL_HEADER_PREFIX = "#erbm-expl v1"


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two rating vectors with missing entries as 0; 0 if either is null."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"vector shapes differ: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(a @ b) / (norm_a * norm_b)


def similarity_matrix(matrix: RatingMatrix) -> np.ndarray:
    """All-pairs user cosine similarity on raw ratings (missing as 0)."""
    gram = matrix.raw @ matrix.raw.T
    norms = np.sqrt(np.diag(gram))
    denom = np.outer(norms, norms)
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = np.where(denom > 0.0, gram / denom, 0.0)
    return sims


@dataclass
class NeighborModel:
    """Per-user k nearest users under cosine similarity, descending."""

    k: int
    indices: np.ndarray  # (n_users, k') int
    similarities: np.ndarray  # (n_users, k') float

    @property
    def n_neighbors(self) -> int:
        return self.indices.shape[1]

    def neighbors_of(self, user: int) -> list[tuple[int, float]]:
        return [
            (int(i), float(s))
            for i, s in zip(self.indices[user], self.similarities[user])
        ]


def k_nearest_neighbors(matrix: RatingMatrix, k: int) -> NeighborModel:
    """Top min(k, n_users - 1) neighbors per user; ties go to the smaller index."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n_users = matrix.n_users
    k_eff = min(k, n_users - 1)
    if k_eff <= 0:
        empty = np.zeros((n_users, 0))
        return NeighborModel(k, empty.astype(int), empty)
    sims = similarity_matrix(matrix)
    np.fill_diagonal(sims, -1.0)  # below any real similarity; never selected
    # Stable sort on -sims: descending similarity, ties by smaller user index.
    order = np.argsort(-sims, axis=1, kind="stable")[:, :k_eff]
    picked = np.take_along_axis(sims, order, axis=1)
    return NeighborModel(k, order, picked)


@dataclass
class ExplainabilityMatrix:
    """Dense (user, item) explainability scores in [0, 1].

    ``theta`` is the strict threshold above which an item counts as
    explainable for a user; the default 0 means "some neighbor rated it".
    """

    scores: np.ndarray
    k: int
    theta: float = 0.0

    def row(self, user: int) -> np.ndarray:
        return self.scores[user]

    def score(self, user: int, item: int) -> float:
        return float(self.scores[user, item])

    def explainable_mask(self, theta: float | None = None) -> np.ndarray:
        t = self.theta if theta is None else theta
        return self.scores > t


def explainability_score(
    matrix: RatingMatrix, neighbors: NeighborModel, user: int, item: int
) -> float:
    """Neighborhood support for one (user, item) pair, in [0, 1]."""
    nb = neighbors.indices[user]
    if len(nb) == 0:
        return 0.0
    total = float(np.sum(matrix.raw[nb, item]))
    return total / (len(nb) * matrix.r_scale)


def explainability_matrix(
    matrix: RatingMatrix,
    k: int,
    theta: float = 0.0,
    neighbors: NeighborModel | None = None,
) -> ExplainabilityMatrix:
    """Scores for every (user, item) pair; row u is the RBM conditioning vector."""
    if neighbors is None:
        neighbors = k_nearest_neighbors(matrix, k)
    n_users = matrix.n_users
    k_eff = neighbors.n_neighbors
    if k_eff == 0:
        return ExplainabilityMatrix(np.zeros_like(matrix.raw), k, theta)
    selection = np.zeros((n_users, n_users))
    rows = np.repeat(np.arange(n_users), k_eff)
    selection[rows, neighbors.indices.ravel()] = 1.0
    # Neighbor rating sums are integer-valued, so the matmul is exact and the
    # single division matches a per-entry loop bit for bit.
    sums = selection @ matrix.raw
    scores = sums / (k_eff * matrix.r_scale)
    return ExplainabilityMatrix(scores, k, theta)


def save_explainability(
    expl: ExplainabilityMatrix, matrix: RatingMatrix, path: str | Path
) -> None:
    """Persist nonzero scores as external-id ``user item score`` triples."""
    users, items = np.nonzero(expl.scores)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{EXPL_HEADER_PREFIX} k={expl.k}\n")
        for u, i in zip(users, items):
            fh.write(
                f"{matrix.user_ids[u]}\t{matrix.item_ids[i]}\t{expl.scores[u, i]:.6f}\n"
            )


def load_explainability(
    path: str | Path, matrix: RatingMatrix, theta: float = 0.0
) -> ExplainabilityMatrix:
    """Load persisted scores; absent pairs are 0 (no neighbor support)."""
    scores = np.zeros((matrix.n_users, matrix.n_items))
    k = None
    user_index = {ext: idx for idx, ext in enumerate(matrix.user_ids)}
    item_index = {ext: idx for idx, ext in enumerate(matrix.item_ids)}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith(EXPL_HEADER_PREFIX):
                k = int(line.rsplit("=", 1)[1])
                continue
            if not line or line.startswith("#"):
                continue
            u_ext, i_ext, score = line.split("\t")
            scores[user_index[int(u_ext)], item_index[int(i_ext)]] = float(score)
    if k is None:
        raise ValueError(f"missing '{EXPL_HEADER_PREFIX}' header in {path}")
    return ExplainabilityMatrix(scores, k, theta)
