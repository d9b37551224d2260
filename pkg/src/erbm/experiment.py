"""Grid experiment runner: sweeps over hidden units f and neighborhood size k.

Each (model, f, k) cell is evaluated over several seeded runs; RMSE is
reported for the rating-predicting models only, while nDCG@10, MEP and MER
are reported for everything.  Per-cell failures are recorded without
aborting the rest of the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import baselines, metrics, rbm
from .dataset import DatasetSplit
from .neighborhood import (
    ExplainabilityMatrix,
    NeighborModel,
    explainability_matrix,
    k_nearest_neighbors,
)

MODEL_TAGS = ("erbm", "plain_rbm", "user_knn", "most_popular")

# Rating-predicting models; the top-n techniques get no RMSE column.
PREDICTS_RATINGS = frozenset({"erbm", "plain_rbm"})

CSV_HEADER = "model,f,k,run,rmse,ndcg10,mep,mer"


@dataclass(frozen=True)
class Cell:
    model: str
    f: int
    k: int


@dataclass(frozen=True)
class RunRow:
    model: str
    f: int
    k: int
    run: str  # run index, "mean" or "std"
    rmse: float | None
    ndcg10: float
    mep: float
    mer: float


@dataclass
class MetricsReport:
    """Per-run metric rows plus metadata and per-cell failure records."""

    rows: list[RunRow] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)

    def cell_rows(self, cell: Cell) -> list[RunRow]:
        return [
            r for r in self.rows
            if (r.model, r.f, r.k) == (cell.model, cell.f, cell.k)
        ]

    def aggregate_rows(self, cells: Sequence[Cell]) -> list[RunRow]:
        """Mean and population std per cell, over completed runs only."""
        out = []
        for cell in cells:
            rows = self.cell_rows(cell)
            if not rows:
                continue
            for stat, func in (("mean", np.mean), ("std", lambda x: np.std(x, ddof=0))):
                rmse_vals = [r.rmse for r in rows if r.rmse is not None]
                out.append(RunRow(
                    cell.model, cell.f, cell.k, stat,
                    float(func(rmse_vals)) if rmse_vals else None,
                    float(func([r.ndcg10 for r in rows])),
                    float(func([r.mep for r in rows])),
                    float(func([r.mer for r in rows])),
                ))
        return out

    def mean_of(self, cell: Cell, metric: str) -> float:
        for row in self.aggregate_rows([cell]):
            if row.run == "mean":
                value = getattr(row, metric)
                if value is None:
                    raise ValueError(f"{metric} not reported for {cell}")
                return value
        raise ValueError(f"no completed runs for {cell}")

    def to_csv(self) -> str:
        lines = [f"# {key}: {value}" for key, value in self.metadata.items()]
        lines.append(CSV_HEADER)
        seen: list[Cell] = []
        for row in self.rows:
            cell = Cell(row.model, row.f, row.k)
            if cell not in seen:
                seen.append(cell)
        for cell in seen:
            for row in self.cell_rows(cell) + self.aggregate_rows([cell]):
                lines.append(_format_row(row))
        for failure in self.failures:
            lines.append(f"# failed: {failure}")
        return "\n".join(lines) + "\n"


def _round9(x: float) -> float:
    return round(x, 9)


def _format_row(row: RunRow) -> str:
    rmse_field = "" if row.rmse is None else f"{row.rmse:.9f}"
    return (
        f"{row.model},{row.f},{row.k},{row.run},{rmse_field},"
        f"{row.ndcg10:.9f},{row.mep:.9f},{row.mer:.9f}"
    )


def write_report(report: MetricsReport, path: str | Path) -> None:
    Path(path).write_text(report.to_csv(), encoding="utf-8")


def top_n_lists(scores: np.ndarray, exclude: np.ndarray, n: int) -> dict[int, list[int]]:
    """Per-user top-n non-excluded items; score ties break to the smaller index."""
    masked = np.where(exclude, -np.inf, scores)
    order = np.argsort(-masked, axis=1, kind="stable")
    lists: dict[int, list[int]] = {}
    for u in range(scores.shape[0]):
        head = order[u, :n]
        lists[u] = [int(i) for i in head if not exclude[u, i]]
    return lists


def relevance_gains(split: DatasetSplit, like_threshold: int = 4) -> dict[int, dict[int, float]]:
    """Held-out gains per test user: the test rating when liked, else 0."""
    gains: dict[int, dict[int, float]] = {}
    for rec in split.test.records:
        gain = float(rec.rating) if rec.rating >= like_threshold else 0.0
        gains.setdefault(rec.user, {})[rec.item] = gain
    return gains


def evaluate_scores(
    scores: np.ndarray,
    split: DatasetSplit,
    expl: ExplainabilityMatrix,
    gains: Mapping[int, Mapping[int, float]],
    top_n: int = 10,
    theta: float = 0.0,
    report_rmse: bool = True,
    explainable_only: bool = False,
) -> tuple[float | None, float, float, float]:
    """(rmse, ndcg@top_n, mep, mer) for one score matrix.

    With explainable_only the recommendation lists are drawn from the
    explainable candidate items only; RMSE always uses the raw scores.
    """
    exclude = split.train.mask
    if explainable_only:
        exclude = exclude | ~(expl.scores > theta)
    lists = top_n_lists(scores, exclude, top_n)
    ndcg_values = [
        metrics.ndcg_at_k(lists[user], relevance, k=top_n)
        for user, relevance in gains.items()
    ]
    ndcg = float(np.mean(ndcg_values)) if ndcg_values else 0.0
    mep_val = metrics.mep(lists, expl, theta)
    mer_val = metrics.mer(lists, expl, split.train, theta)
    rmse_val = metrics.rmse(scores, split.test) if report_rmse else None
    return rmse_val, ndcg, mep_val, mer_val


def run_experiment(
    split: DatasetSplit,
    cells: Sequence[Cell],
    runs: int = 10,
    top_n: int = 10,
    theta: float = 0.0,
    like_threshold: int = 4,
    base_config: rbm.TrainConfig | None = None,
) -> MetricsReport:
    """Train and evaluate every grid cell for seeds 0..runs-1.

    The split is shared across the whole grid; neighborhoods and
    explainability matrices are cached per k, and a plain RBM trained for
    one (f, seed) is reused across k cells since its training never touches
    the conditioning input.
    """
    for cell in cells:
        if cell.model not in MODEL_TAGS:
            raise ValueError(f"unknown model tag {cell.model!r}")
    if base_config is None:
        base_config = rbm.TrainConfig()
    report = MetricsReport(metadata=_report_metadata(split, runs, top_n, theta, like_threshold))

    ks = sorted({cell.k for cell in cells})
    neighbor_cache: dict[int, NeighborModel] = {}
    expl_cache: dict[int, ExplainabilityMatrix] = {}
    for k in ks:
        neighbor_cache[k] = k_nearest_neighbors(split.train, k)
        expl_cache[k] = explainability_matrix(
            split.train, k, theta, neighbors=neighbor_cache[k]
        )
    knn_scores_cache: dict[int, np.ndarray] = {}
    needs_popularity = any(cell.model == "most_popular" for cell in cells)
    pop_scores = _popularity_scores(split) if needs_popularity else None
    gains = relevance_gains(split, like_threshold)

    for run in range(runs):
        params_cache: dict[tuple, rbm.RbmParams] = {}
        for cell in cells:
            try:
                row = _run_cell(
                    cell, run, split, expl_cache, neighbor_cache,
                    knn_scores_cache, pop_scores, gains,
                    top_n, theta, base_config, params_cache,
                )
                report.rows.append(row)
            except Exception as exc:  # record and keep sweeping
                report.failures.append(
                    f"model={cell.model} f={cell.f} k={cell.k} run={run}: {exc}"
                )
    return report


def _popularity_scores(split: DatasetSplit) -> np.ndarray:
    counts = baselines.popularity_counts(split.train)
    return np.broadcast_to(counts, split.train.raw.shape)


def _run_cell(
    cell: Cell,
    run: int,
    split: DatasetSplit,
    expl_cache: Mapping[int, ExplainabilityMatrix],
    neighbor_cache: Mapping[int, NeighborModel],
    knn_scores_cache: dict[int, np.ndarray],
    pop_scores: np.ndarray | None,
    gains: Mapping[int, Mapping[int, float]],
    top_n: int,
    theta: float,
    base_config: rbm.TrainConfig,
    params_cache: dict[tuple, rbm.RbmParams],
) -> RunRow:
    expl = expl_cache[cell.k]
    if cell.model in PREDICTS_RATINGS:
        mode = "conditioned" if cell.model == "erbm" else "disabled"
        key = (cell.model, cell.f, cell.k) if cell.model == "erbm" else (cell.model, cell.f)
        if key not in params_cache:
            config = replace(
                base_config, f=cell.f, seed=run, explainability_mode=mode
            )
            m_input = expl if mode == "conditioned" else None
            params_cache[key] = rbm.train(split, m_input, config).params
        m_rows = expl.scores if cell.model == "erbm" else None
        scores = rbm.predict_matrix(params_cache[key], split.train, m_rows)
    elif cell.model == "user_knn":
        if cell.k not in knn_scores_cache:
            knn_scores_cache[cell.k] = baselines.user_knn_scores(
                split.train, neighbor_cache[cell.k]
            )
        scores = knn_scores_cache[cell.k]
    else:  # most_popular
        assert pop_scores is not None
        scores = pop_scores
    rmse_val, ndcg, mep_val, mer_val = evaluate_scores(
        scores, split, expl, gains, top_n, theta,
        report_rmse=cell.model in PREDICTS_RATINGS,
        explainable_only=cell.model == "erbm",
    )
    return RunRow(
        cell.model, cell.f, cell.k, str(run),
        None if rmse_val is None else _round9(rmse_val),
        _round9(ndcg), _round9(mep_val), _round9(mer_val),
    )


def _report_metadata(
    split: DatasetSplit, runs: int, top_n: int, theta: float, like_threshold: int
) -> dict[str, str]:
    return {
        "split": f"per-user temporal holdout, test_fraction={split.test_fraction}",
        "neighbors": "train-only cosine similarity, missing ratings as 0",
        "explainable": f"explainability score strictly above theta={theta}",
        "erbm_candidates": "erbm recommends from explainable unrated items; other models rank all unrated items",
        "mep": "per-user fraction of recommended items that are explainable, averaged",
        "mer": "per-user fraction of explainable unrated items that were recommended, averaged",
        "ndcg": (
            f"gains are held-out ratings >= {like_threshold} (else 0); "
            "ranking over the full unrated candidate set"
        ),
        "rmse": "raw rating units over the test set; rating-predicting models only",
        "runs": f"{runs} seeded runs (seeds 0..{runs - 1}); top_n={top_n}",
        "aggregates": "run=mean|std rows; std is population (ddof=0)",
        "emf": "external comparator slot: paste published rows as model=emf here",
    }


@dataclass
class SweepSettings:
    """Flat key=value sweep configuration."""

    ratings: str = ""
    test_fraction: float = 0.1
    r_scale: int = 5
    models: tuple[str, ...] = MODEL_TAGS
    f_values: tuple[int, ...] = (50,)
    k_values: tuple[int, ...] = (50,)
    runs: int = 10
    top_n: int = 10
    theta: float = 0.0
    like_threshold: int = 4
    out: str = "report.csv"
    epochs: int = 30
    learning_rate_w: float = 0.01
    learning_rate_d: float = 0.01
    cd_steps: int = 1
    minibatch: int = 32
    momentum_initial: float = 0.5
    momentum_final: float = 0.9
    momentum_switch_epoch: int = 5
    weight_decay: float = 1e-4
    init_std: float = 0.01
    m_treatment: str = "clamped"
    hidden_data_stats: str = "mean_field"

    def cells(self) -> list[Cell]:
        return [
            Cell(model, f, k)
            for model in self.models
            for f in self.f_values
            for k in self.k_values
        ]

    def train_config(self) -> rbm.TrainConfig:
        return rbm.TrainConfig(
            epochs=self.epochs,
            learning_rate_w=self.learning_rate_w,
            learning_rate_d=self.learning_rate_d,
            cd_steps=self.cd_steps,
            minibatch=self.minibatch,
            momentum_initial=self.momentum_initial,
            momentum_final=self.momentum_final,
            momentum_switch_epoch=self.momentum_switch_epoch,
            weight_decay=self.weight_decay,
            init_std=self.init_std,
            m_treatment=self.m_treatment,
            hidden_data_stats=self.hidden_data_stats,
        )


def load_sweep_settings(path: str | Path) -> SweepSettings:
    """Parse a flat key=value config file ('#' starts a comment)."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path} line {lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
    settings = SweepSettings()
    by_name = {f.name: f for f in fields(SweepSettings)}
    for key, value in values.items():
        if key not in by_name:
            raise ValueError(f"unknown config key {key!r}")
        current = getattr(settings, key)
        if isinstance(current, tuple):
            parts = tuple(p.strip() for p in value.split(",") if p.strip())
            elem = int if key in ("f_values", "k_values") else str
            setattr(settings, key, tuple(elem(p) for p in parts))
        elif isinstance(current, bool):
            setattr(settings, key, value.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(settings, key, int(value))
        elif isinstance(current, float):
            setattr(settings, key, float(value))
        else:
            setattr(settings, key, value)
    return settings
