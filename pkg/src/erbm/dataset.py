"""MovieLens-style rating data: parsing, rating matrix, per-user temporal split."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

DEFAULT_R_SCALE = 5

SPLIT_HEADER_PREFIX = "#erbm-split v1"


class ParseError(ValueError):
    """Malformed ratings input; message names the offending 1-based line."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class RatingRecord:
    """One rating with dense internal user/item indices."""

    user: int
    item: int
    rating: int
    timestamp: int


class RatingTable:
    """Immutable set of ratings plus the external-id maps.

    Internal indices are dense and 0-based; ``user_ids[u]`` / ``item_ids[i]``
    recover the external identifiers.
    """

    def __init__(
        self,
        records: list[RatingRecord],
        user_ids: tuple[int, ...],
        item_ids: tuple[int, ...],
        r_scale: int = DEFAULT_R_SCALE,
    ):
        self.records = records
        self.user_ids = user_ids
        self.item_ids = item_ids
        self.r_scale = r_scale
        self.user_index = {ext: idx for idx, ext in enumerate(user_ids)}
        self.item_index = {ext: idx for idx, ext in enumerate(item_ids)}

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_ratings(self) -> int:
        return len(self.records)

    def by_user(self) -> dict[int, list[RatingRecord]]:
        grouped: dict[int, list[RatingRecord]] = {}
        for rec in self.records:
            grouped.setdefault(rec.user, []).append(rec)
        return grouped

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RatingTable):
            return NotImplemented
        return (
            self.records == other.records
            and self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
            and self.r_scale == other.r_scale
        )

    def __repr__(self) -> str:
        return (
            f"RatingTable(n_users={self.n_users}, n_items={self.n_items}, "
            f"n_ratings={self.n_ratings})"
        )


class RatingMatrix:
    """Dense view of a rating table with an explicit rated mask.

    ``raw[u, i]`` is only meaningful where ``mask[u, i]`` is True; unrated
    cells hold 0.0 purely as a convenience for missing-as-zero arithmetic.
    """

    def __init__(
        self,
        raw: np.ndarray,
        mask: np.ndarray,
        r_scale: int,
        user_ids: tuple[int, ...],
        item_ids: tuple[int, ...],
    ):
        self.raw = raw
        self.mask = mask
        self.r_scale = r_scale
        self.user_ids = user_ids
        self.item_ids = item_ids
        self.raw.setflags(write=False)
        self.mask.setflags(write=False)
        self._normalized: np.ndarray | None = None

    @classmethod
    def from_table(cls, table: RatingTable) -> "RatingMatrix":
        raw = np.zeros((table.n_users, table.n_items))
        mask = np.zeros((table.n_users, table.n_items), dtype=bool)
        for rec in table.records:
            if mask[rec.user, rec.item]:
                raise ValueError(
                    f"duplicate rating for user {table.user_ids[rec.user]} "
                    f"item {table.item_ids[rec.item]}"
                )
            raw[rec.user, rec.item] = rec.rating
            mask[rec.user, rec.item] = True
        return cls(raw, mask, table.r_scale, table.user_ids, table.item_ids)

    @property
    def n_users(self) -> int:
        return self.raw.shape[0]

    @property
    def n_items(self) -> int:
        return self.raw.shape[1]

    @property
    def n_ratings(self) -> int:
        return int(self.mask.sum())

    def get(self, user: int, item: int) -> int | None:
        """Raw rating, or None when the pair is unrated."""
        if self.mask[user, item]:
            return int(self.raw[user, item])
        return None

    def normalized(self) -> np.ndarray:
        """Ratings mapped to (0, 1] by raw / r_scale, 0 where unrated."""
        if self._normalized is None:
            norm = self.raw / self.r_scale
            norm.setflags(write=False)
            self._normalized = norm
        return self._normalized

    def rated_items(self, user: int) -> np.ndarray:
        return np.flatnonzero(self.mask[user])


@dataclass
class DatasetSplit:
    """Per-user temporal holdout; train and test partition the source table."""

    train: RatingMatrix
    train_table: RatingTable
    test: RatingTable
    test_fraction: float


def normalize(rating: int, r_scale: int = DEFAULT_R_SCALE) -> float:
    """Map a raw rating on 1..r_scale to (0, 1]."""
    if not 1 <= rating <= r_scale:
        raise ValueError(f"rating {rating} outside 1..{r_scale}")
    return rating / r_scale


def denormalize(value: float, r_scale: int = DEFAULT_R_SCALE) -> float:
    """Inverse of :func:`normalize`."""
    return value * r_scale


def _iter_lines(stream: IO | Iterable[str]) -> Iterator[str]:
    for line in stream:
        if isinstance(line, bytes):
            yield line.decode("utf-8")
        else:
            yield line


def parse_ratings(
    stream: IO | Iterable[str],
    sep: str = "\t",
    r_scale: int = DEFAULT_R_SCALE,
) -> RatingTable:
    """Parse ``user item rating timestamp`` lines into a RatingTable.

    Blank lines and '#'-prefixed comment/header lines are skipped.  External
    ids are remapped to dense 0-based indices in sorted-id order, so the
    mapping does not depend on line order.
    """
    raw_records: list[tuple[int, int, int, int]] = []
    seen: set[tuple[int, int]] = set()
    for lineno, line in enumerate(_iter_lines(stream), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(sep)
        if len(fields) != 4:
            raise ParseError(lineno, f"expected 4 fields, got {len(fields)}")
        try:
            user, item, rating, timestamp = (int(f) for f in fields)
        except ValueError:
            raise ParseError(lineno, f"non-integer field in {fields!r}") from None
        if not 1 <= rating <= r_scale:
            raise ParseError(lineno, f"rating {rating} outside 1..{r_scale}")
        if (user, item) in seen:
            raise ParseError(lineno, f"duplicate rating for user {user} item {item}")
        seen.add((user, item))
        raw_records.append((user, item, rating, timestamp))
    return _build_table(raw_records, r_scale)


def _build_table(
    raw_records: list[tuple[int, int, int, int]], r_scale: int
) -> RatingTable:
    user_ids = tuple(sorted({r[0] for r in raw_records}))
    item_ids = tuple(sorted({r[1] for r in raw_records}))
    user_index = {ext: idx for idx, ext in enumerate(user_ids)}
    item_index = {ext: idx for idx, ext in enumerate(item_ids)}
    records = [
        RatingRecord(user_index[u], item_index[i], r, t) for u, i, r, t in raw_records
    ]
    return RatingTable(records, user_ids, item_ids, r_scale)


def load_ratings(path: str | Path, sep: str = "\t", r_scale: int = DEFAULT_R_SCALE) -> RatingTable:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_ratings(fh, sep=sep, r_scale=r_scale)


def temporal_split(table: RatingTable, test_fraction: float = 0.1) -> DatasetSplit:
    """Hold out each user's most recent ratings.

    Per user, the ceil(test_fraction * count) newest ratings go to test;
    timestamp ties are broken toward the larger item index.  The holdout is
    capped at count - 1 so every user keeps at least one training rating
    (a user absent from training could never be scored).
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction {test_fraction} outside (0, 1)")
    train_records: list[RatingRecord] = []
    test_records: list[RatingRecord] = []
    for _, recs in sorted(table.by_user().items()):
        ordered = sorted(recs, key=lambda r: (r.timestamp, r.item))
        n_test = min(math.ceil(test_fraction * len(ordered)), len(ordered) - 1)
        cut = len(ordered) - n_test
        train_records.extend(ordered[:cut])
        test_records.extend(ordered[cut:])
    train_table = RatingTable(train_records, table.user_ids, table.item_ids, table.r_scale)
    test_table = RatingTable(test_records, table.user_ids, table.item_ids, table.r_scale)
    return DatasetSplit(
        train=RatingMatrix.from_table(train_table),
        train_table=train_table,
        test=test_table,
        test_fraction=test_fraction,
    )


def serialize_table(table: RatingTable, sep: str = "\t") -> str:
    """Render records as external-id ``user item rating timestamp`` lines."""
    lines = []
    for rec in table.records:
        lines.append(
            sep.join(
                (
                    str(table.user_ids[rec.user]),
                    str(table.item_ids[rec.item]),
                    str(rec.rating),
                    str(rec.timestamp),
                )
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def save_split(split: DatasetSplit, train_path: str | Path, test_path: str | Path) -> None:
    header = f"{SPLIT_HEADER_PREFIX} test_fraction={split.test_fraction}\n"
    for table, path in ((split.train_table, train_path), (split.test, test_path)):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header)
            fh.write(serialize_table(table))


def load_split(
    train_path: str | Path,
    test_path: str | Path,
    r_scale: int = DEFAULT_R_SCALE,
) -> DatasetSplit:
    """Rebuild a split from its two persisted halves.

    The id maps are built over the union of both files so train-only and
    test-only users/items index consistently.
    """
    halves = []
    test_fraction = None
    for path in (train_path, test_path):
        raw_records: list[tuple[int, int, int, int]] = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if line.startswith(SPLIT_HEADER_PREFIX):
                    test_fraction = float(line.rsplit("=", 1)[1])
                    continue
                if not line or line.startswith("#"):
                    continue
                fields = line.split("\t")
                if len(fields) != 4:
                    raise ParseError(lineno, f"expected 4 fields, got {len(fields)}")
                try:
                    raw_records.append(tuple(int(f) for f in fields))
                except ValueError:
                    raise ParseError(lineno, f"non-integer field in {fields!r}") from None
        halves.append(raw_records)
    if test_fraction is None:
        raise ValueError(f"missing '{SPLIT_HEADER_PREFIX}' header in split files")
    combined = _build_table(halves[0] + halves[1], r_scale)
    n_train = len(halves[0])
    train_table = RatingTable(
        combined.records[:n_train], combined.user_ids, combined.item_ids, r_scale
    )
    test_table = RatingTable(
        combined.records[n_train:], combined.user_ids, combined.item_ids, r_scale
    )
    return DatasetSplit(
        train=RatingMatrix.from_table(train_table),
        train_table=train_table,
        test=test_table,
        test_fraction=test_fraction,
    )
