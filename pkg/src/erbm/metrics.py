"""Accuracy and explainability metrics for rating prediction and top-n lists."""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .dataset import RatingMatrix, RatingTable
from .neighborhood import ExplainabilityMatrix


def rmse(
    predictions: Mapping[tuple[int, int], float] | np.ndarray,
    truth: RatingTable,
) -> float:
    """Root mean squared error over the test pairs, in raw rating units.

    `predictions` is either a dense (n_users, n_items) array or a mapping
    keyed by (user, item); a missing mapping entry is a contract violation.
    """
    if truth.n_ratings == 0:
        raise ValueError("empty test set")
    total = 0.0
    for rec in truth.records:
        if isinstance(predictions, np.ndarray):
            pred = predictions[rec.user, rec.item]
        else:
            try:
                pred = predictions[(rec.user, rec.item)]
            except KeyError:
                raise ValueError(
                    f"missing prediction for user {rec.user} item {rec.item}"
                ) from None
        total += (rec.rating - pred) ** 2
    return math.sqrt(total / truth.n_ratings)


def ndcg_at_k(
    ranked: Sequence[int],
    relevance: Mapping[int, float],
    k: int = 10,
) -> float:
    """Normalized discounted cumulative gain at rank k.

    Gains come from `relevance`; items absent from it have gain 0.  Returns
    0 when the user has no positive-gain item anywhere (ideal DCG is 0).
    """
    gains = sorted((g for g in relevance.values() if g > 0), reverse=True)
    ideal = sum(g / math.log2(p + 1) for p, g in enumerate(gains[:k], start=1))
    if ideal == 0.0:
        return 0.0
    dcg = sum(
        relevance.get(item, 0.0) / math.log2(p + 1)
        for p, item in enumerate(ranked[:k], start=1)
    )
    return dcg / ideal


def mep(
    topn_lists: Mapping[int, Sequence[int]],
    expl: ExplainabilityMatrix,
    theta: float | None = None,
) -> float:
    """Mean explainable fraction of each user's recommendation list.

    Users with empty lists are excluded from the mean.
    """
    t = expl.theta if theta is None else theta
    fractions = []
    for user, items in topn_lists.items():
        if len(items) == 0:
            continue
        explainable = sum(1 for i in items if expl.scores[user, i] > t)
        fractions.append(explainable / len(items))
    return float(np.mean(fractions)) if fractions else 0.0


def mer(
    topn_lists: Mapping[int, Sequence[int]],
    expl: ExplainabilityMatrix,
    train: RatingMatrix,
    theta: float | None = None,
) -> float:
    """Mean recommended fraction of each user's explainable candidate items.

    Candidates are items the user has not rated in training whose score
    exceeds theta; users with no candidates are excluded.
    """
    t = expl.theta if theta is None else theta
    fractions = []
    for user, items in topn_lists.items():
        candidate_mask = (expl.scores[user] > t) & ~train.mask[user]
        n_candidates = int(candidate_mask.sum())
        if n_candidates == 0:
            continue
        hit = sum(1 for i in items if candidate_mask[i])
        fractions.append(hit / n_candidates)
    return float(np.mean(fractions)) if fractions else 0.0
