"""Neighbor-style explanation statements for recommended items."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import RatingMatrix
from .neighborhood import NeighborModel


class ExplanationError(ValueError):
    """Raised when an item has no neighborhood support for the user."""


@dataclass(frozen=True)
class ExplanationStatement:
    """'x out of k people with similar interests ...' with its backing numbers."""

    item: int
    qualifying_count: int  # neighbors who rated the item at rating_level or above
    neighborhood_size: int
    rating_level: int
    text: str


def render_explanation(
    user: int,
    item: int,
    matrix: RatingMatrix,
    neighbors: NeighborModel,
) -> ExplanationStatement:
    """Pick the strongest supported rating level and phrase it.

    For each level r, x_r counts neighbors who rated the item r or higher;
    the statement uses the r maximizing x_r * r (ties toward larger r), so
    broad support and high ratings trade off against each other.
    """
    nb = neighbors.indices[user]
    ratings = matrix.raw[nb, item].astype(int)
    ratings = ratings[matrix.mask[nb, item]]
    if len(ratings) == 0:
        raise ExplanationError(
            f"no neighborhood support: no neighbor of user {user} rated item {item}"
        )
    k = len(nb)
    best_r = 0
    best_product = -1
    best_x = 0
    for r in range(1, matrix.r_scale + 1):
        x_r = int(np.sum(ratings >= r))
        if x_r * r >= best_product:
            best_product = x_r * r
            best_r = r
            best_x = x_r
    if best_r == matrix.r_scale:
        phrase = f"rated this movie {best_r}"
    else:
        phrase = f"rated this movie {best_r} and higher"
    text = (
        f"{best_x} out of {k} people with similar interests to you have {phrase}."
    )
    return ExplanationStatement(item, best_x, k, best_r, text)
