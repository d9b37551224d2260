"""Comparator recommenders: similarity-weighted user kNN and most-popular."""

from __future__ import annotations

from enum import Enum

import numpy as np

from .dataset import RatingMatrix
from .neighborhood import NeighborModel


class BaselineKind(Enum):
    """Comparators run alongside the conditioned model.

    PLAIN_RBM is realized by the rbm module with explainability_mode
    "disabled" rather than by code here.
    """

    USER_KNN = "user_knn"
    MOST_POPULAR = "most_popular"
    PLAIN_RBM = "plain_rbm"


def _fallback_means(matrix: RatingMatrix) -> tuple[np.ndarray, float]:
    counts = matrix.mask.sum(axis=1)
    sums = matrix.raw.sum(axis=1)
    total = matrix.mask.sum()
    global_mean = float(matrix.raw.sum() / total) if total else (1 + matrix.r_scale) / 2
    user_means = np.where(counts > 0, sums / np.maximum(counts, 1), global_mean)
    return user_means, global_mean


def user_knn_predict(
    matrix: RatingMatrix, neighbors: NeighborModel, user: int, item: int
) -> float:
    """Similarity-weighted mean of neighbor ratings on the item.

    Falls back to the user's training mean, then the global mean, when no
    neighbor with positive similarity rated the item.
    """
    weighted = 0.0
    sim_total = 0.0
    for other, sim in zip(neighbors.indices[user], neighbors.similarities[user]):
        rating = matrix.get(int(other), item)
        if rating is not None:
            weighted += sim * rating
            sim_total += sim
    if sim_total > 0.0:
        return weighted / sim_total
    user_means, global_mean = _fallback_means(matrix)
    if matrix.mask[user].any():
        return float(user_means[user])
    return global_mean


def user_knn_scores(matrix: RatingMatrix, neighbors: NeighborModel) -> np.ndarray:
    """Predicted ratings for all (user, item) pairs, fallback chain applied."""
    n_users, n_items = matrix.raw.shape
    user_means, global_mean = _fallback_means(matrix)
    scores = np.empty((n_users, n_items))
    for u in range(n_users):
        nb = neighbors.indices[u]
        sims = neighbors.similarities[u]
        if len(nb) == 0:
            scores[u] = user_means[u] if matrix.mask[u].any() else global_mean
            continue
        rated = matrix.mask[nb].astype(float)
        numer = sims @ (matrix.raw[nb] * rated)
        denom = sims @ rated
        fallback = user_means[u] if matrix.mask[u].any() else global_mean
        with np.errstate(divide="ignore", invalid="ignore"):
            scores[u] = np.where(denom > 0.0, numer / np.maximum(denom, 1e-300), fallback)
    return scores


def popularity_counts(matrix: RatingMatrix) -> np.ndarray:
    """Training rating count per item."""
    return matrix.mask.sum(axis=0).astype(float)


def most_popular_top_n(matrix: RatingMatrix, user: int, n: int) -> list[int]:
    """The user's unrated items ranked by rating count, ties to smaller index."""
    counts = popularity_counts(matrix)
    order = np.argsort(-counts, kind="stable")
    rated = matrix.mask[user]
    return [int(i) for i in order if not rated[i]][:n]
