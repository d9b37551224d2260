"""Explainability-conditioned RBM: activations, CD training, prediction.

Visible units carry ratings normalized to (0, 1]; a second visible layer of
the same width carries the per-item explainability scores m and is connected
to the hidden layer through its own weight matrix D.  The joint distribution
over (v, h) is conditional on m: by default m stays clamped to its data
values during Gibbs reconstruction, and the `reconstructed` treatment that
resamples it from the hidden state is available behind a config switch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DatasetSplit, RatingMatrix
from .neighborhood import ExplainabilityMatrix

MODEL_HEADER_PREFIX = "#erbm-model v1"

EXPLAINABILITY_MODES = ("conditioned", "disabled")
M_TREATMENTS = ("clamped", "reconstructed")
HIDDEN_DATA_STATS = ("mean_field", "sampled")


class TrainingDivergedError(RuntimeError):
    """A parameter became non-finite during training."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged at epoch {epoch}: non-finite parameter")
        self.epoch = epoch


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class RbmParams:
    """Network weights and biases.

    W couples ratings to hidden units, D couples explainability scores to
    hidden units; a, b, c are the hidden, rating and explainability biases.
    """

    W: np.ndarray  # (n_items, f)
    D: np.ndarray  # (n_items, f)
    a: np.ndarray  # (f,)
    b: np.ndarray  # (n_items,)
    c: np.ndarray  # (n_items,)

    @property
    def n_items(self) -> int:
        return self.W.shape[0]

    @property
    def f(self) -> int:
        return self.W.shape[1]

    def validate(self) -> None:
        n, f = self.W.shape
        if self.D.shape != (n, f):
            raise ValueError(f"D shape {self.D.shape} != W shape {(n, f)}")
        if self.a.shape != (f,) or self.b.shape != (n,) or self.c.shape != (n,):
            raise ValueError("bias shapes inconsistent with W")
        for name, arr in (("W", self.W), ("D", self.D), ("a", self.a),
                          ("b", self.b), ("c", self.c)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")

    def copy(self) -> "RbmParams":
        return RbmParams(self.W.copy(), self.D.copy(), self.a.copy(),
                         self.b.copy(), self.c.copy())

    def all_finite(self) -> bool:
        return all(
            np.all(np.isfinite(arr))
            for arr in (self.W, self.D, self.a, self.b, self.c)
        )


def init_params(n_items: int, f: int, rng: np.random.Generator,
                init_std: float = 0.01) -> RbmParams:
    """Small zero-mean Gaussian weights, zero biases."""
    return RbmParams(
        W=rng.normal(0.0, init_std, size=(n_items, f)),
        D=rng.normal(0.0, init_std, size=(n_items, f)),
        a=np.zeros(f),
        b=np.zeros(n_items),
        c=np.zeros(n_items),
    )


@dataclass
class TrainConfig:
    """Hyperparameters and mode switches for CD training.

    Defaults follow common RBM practice: small learning rates, momentum
    ramping from 0.5 to 0.9 after a few epochs, mild weight decay, CD-1.
    `explainability_mode="disabled"` yields a plain RBM: D and c stay zero
    and the conditioning input is ignored entirely.  `hidden_data_stats`
    records whether the data-phase hidden statistics use mean-field
    probabilities (default, lower variance) or sampled binaries.
    """

    f: int = 50
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
    seed: int = 0
    explainability_mode: str = "conditioned"
    m_treatment: str = "clamped"
    hidden_data_stats: str = "mean_field"

    def validate(self) -> None:
        if self.f < 1:
            raise ValueError(f"f must be >= 1, got {self.f}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate_w <= 0 or self.learning_rate_d <= 0:
            raise ValueError("learning rates must be positive")
        if self.cd_steps < 1:
            raise ValueError(f"cd_steps must be >= 1, got {self.cd_steps}")
        if self.minibatch < 1:
            raise ValueError(f"minibatch must be >= 1, got {self.minibatch}")
        if self.explainability_mode not in EXPLAINABILITY_MODES:
            raise ValueError(f"unknown explainability_mode {self.explainability_mode!r}")
        if self.m_treatment not in M_TREATMENTS:
            raise ValueError(f"unknown m_treatment {self.m_treatment!r}")
        if self.hidden_data_stats not in HIDDEN_DATA_STATS:
            raise ValueError(f"unknown hidden_data_stats {self.hidden_data_stats!r}")


@dataclass
class GibbsState:
    """One (batched) configuration of the three layers."""

    v: np.ndarray
    h: np.ndarray
    m: np.ndarray
    rated_mask: np.ndarray | None = None


def _check_last_dim(name: str, arr: np.ndarray, expected: int) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if arr.shape[-1] != expected:
        raise ValueError(f"{name} has trailing dimension {arr.shape[-1]}, expected {expected}")
    return arr


def hidden_activation(params: RbmParams, v: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Per-hidden-unit on-probabilities given ratings v and scores m."""
    v = _check_last_dim("v", v, params.n_items)
    m = _check_last_dim("m", m, params.n_items)
    return sigmoid(params.a + v @ params.W + m @ params.D)


def visible_activation(params: RbmParams, h: np.ndarray) -> np.ndarray:
    """Per-item on-probabilities of the rating layer given hidden state h."""
    h = _check_last_dim("h", h, params.f)
    return sigmoid(params.b + h @ params.W.T)


def explainability_activation(params: RbmParams, h: np.ndarray) -> np.ndarray:
    """Per-item on-probabilities of the explainability layer given h."""
    h = _check_last_dim("h", h, params.f)
    return sigmoid(params.c + h @ params.D.T)


@dataclass
class CdDeltas:
    """Learning-rate-scaled contrastive divergence parameter updates."""

    w: np.ndarray
    d: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


def _as_batch(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    return arr[None, :] if arr.ndim == 1 else arr


def cd_step(
    params: RbmParams,
    v_data: np.ndarray,
    m: np.ndarray,
    rated_mask: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
) -> CdDeltas:
    """One contrastive divergence estimate on a batch of users.

    Returns eps * (data statistics - reconstruction statistics) for every
    parameter, averaged over the batch.  Only rated items contribute to the
    W and b updates; the explainability path sees all items.  Hidden units
    are sampled as binaries to drive the reconstruction, while the final
    statistics on both sides use probabilities.  cd_steps=0 is a debug mode
    where the reconstruction is the data itself, making every delta exactly
    zero.
    """
    v0 = _as_batch(v_data)
    m0 = _as_batch(m)
    mask = _as_batch(rated_mask).astype(float)
    batch = v0.shape[0]
    if config.explainability_mode == "disabled":
        m0 = np.zeros_like(m0)

    h0_prob = hidden_activation(params, v0, m0)
    h_pos = h0_prob if config.hidden_data_stats == "mean_field" else None
    h_state = (rng.random(h0_prob.shape) < h0_prob).astype(float)
    if h_pos is None:
        h_pos = h_state

    if config.cd_steps == 0:
        v_neg, m_neg, h_neg = v0, m0, h_pos
    else:
        v_neg = v0
        m_neg = m0
        h_neg = h0_prob
        for step in range(config.cd_steps):
            last = step == config.cd_steps - 1
            v_prob = visible_activation(params, h_state) * mask
            v_neg = v_prob if last else (rng.random(v_prob.shape) < v_prob) * mask
            if config.m_treatment == "reconstructed":
                m_prob = explainability_activation(params, h_state)
                m_neg = m_prob if last else (rng.random(m_prob.shape) < m_prob).astype(float)
            else:
                m_neg = m0
            h_neg = hidden_activation(params, v_neg, m_neg)
            if not last:
                h_state = (rng.random(h_neg.shape) < h_neg).astype(float)

    eps_w = config.learning_rate_w
    eps_d = config.learning_rate_d
    delta_w = eps_w * (v0.T @ h_pos - v_neg.T @ h_neg) / batch
    delta_b = eps_w * (v0 - v_neg).mean(axis=0)
    delta_a = eps_w * (h_pos - h_neg).mean(axis=0)
    if config.explainability_mode == "disabled":
        delta_d = np.zeros_like(params.D)
        delta_c = np.zeros_like(params.c)
    else:
        delta_d = eps_d * (m0.T @ h_pos - m_neg.T @ h_neg) / batch
        delta_c = eps_d * (m0 - m_neg).mean(axis=0)
    return CdDeltas(delta_w, delta_d, delta_a, delta_b, delta_c)


@dataclass
class EpochStats:
    epoch: int
    recon_rmse: float


@dataclass
class TrainResult:
    params: RbmParams
    log: list[EpochStats] = field(default_factory=list)


def reconstruction_rmse(
    params: RbmParams, v: np.ndarray, m: np.ndarray, mask: np.ndarray
) -> float:
    """Masked mean-field reconstruction error in normalized rating units."""
    h = hidden_activation(params, v, m)
    v_hat = visible_activation(params, h)
    err = (v - v_hat) ** 2
    return float(np.sqrt(err[mask].sum() / mask.sum()))


def train(
    split: DatasetSplit,
    expl: ExplainabilityMatrix | None,
    config: TrainConfig,
) -> TrainResult:
    """CD training over per-user visible configurations with shared weights.

    Every epoch shuffles users into minibatches, applies momentum and weight
    decay around the CD deltas, and logs the masked reconstruction error.
    Raises TrainingDivergedError naming the epoch if a parameter goes
    non-finite.
    """
    config.validate()
    matrix = split.train
    if config.explainability_mode == "conditioned":
        if expl is None:
            raise ValueError("conditioned mode requires an explainability matrix")
        if expl.scores.shape != matrix.raw.shape:
            raise ValueError(
                f"explainability shape {expl.scores.shape} does not match "
                f"rating matrix {matrix.raw.shape}"
            )
        m_all = expl.scores
    else:
        m_all = np.zeros_like(matrix.raw)

    rng = np.random.default_rng(config.seed)
    params = init_params(matrix.n_items, config.f, rng, config.init_std)
    if config.explainability_mode == "disabled":
        params.D[:] = 0.0
        params.c[:] = 0.0
    v_all = matrix.normalized()
    mask_all = matrix.mask

    vel = CdDeltas(
        np.zeros_like(params.W), np.zeros_like(params.D),
        np.zeros_like(params.a), np.zeros_like(params.b), np.zeros_like(params.c),
    )
    log: list[EpochStats] = []
    for epoch in range(config.epochs):
        momentum = (
            config.momentum_initial
            if epoch < config.momentum_switch_epoch
            else config.momentum_final
        )
        order = rng.permutation(matrix.n_users)
        for start in range(0, matrix.n_users, config.minibatch):
            idx = order[start:start + config.minibatch]
            deltas = cd_step(params, v_all[idx], m_all[idx], mask_all[idx], config, rng)
            decay_w = config.learning_rate_w * config.weight_decay
            vel.w = momentum * vel.w + deltas.w - decay_w * params.W
            vel.a = momentum * vel.a + deltas.a
            vel.b = momentum * vel.b + deltas.b
            params.W += vel.w
            params.a += vel.a
            params.b += vel.b
            if config.explainability_mode == "conditioned":
                decay_d = config.learning_rate_d * config.weight_decay
                vel.d = momentum * vel.d + deltas.d - decay_d * params.D
                vel.c = momentum * vel.c + deltas.c
                params.D += vel.d
                params.c += vel.c
        if not params.all_finite():
            raise TrainingDivergedError(epoch + 1)
        log.append(EpochStats(epoch + 1, reconstruction_rmse(params, v_all, m_all, mask_all)))
    return TrainResult(params, log)


def predict_ratings(
    params: RbmParams,
    user_visible: np.ndarray,
    m: np.ndarray,
    rated_mask: np.ndarray | None = None,
    r_scale: int = 5,
) -> np.ndarray:
    """Mean-field predicted ratings on the raw 1..r_scale scale, all items.

    The hidden state is inferred from the user's normalized ratings and
    conditioning vector using probabilities (no sampling), then the rating
    layer's activation is scaled back to rating units.
    """
    v = np.asarray(user_visible, dtype=float)
    if rated_mask is not None:
        v = np.where(np.asarray(rated_mask, dtype=bool), v, 0.0)
    h = hidden_activation(params, v, m)
    return visible_activation(params, h) * r_scale


def predict_matrix(
    params: RbmParams,
    matrix: RatingMatrix,
    m_rows: np.ndarray | None,
) -> np.ndarray:
    """Predicted ratings for every (user, item) pair at once."""
    m = np.zeros_like(matrix.raw) if m_rows is None else m_rows
    return predict_ratings(params, matrix.normalized(), m, r_scale=matrix.r_scale)


def top_n(
    params: RbmParams,
    user: int,
    n: int,
    split: DatasetSplit,
    expl: ExplainabilityMatrix | None,
    explainable_only: bool = False,
) -> list[int]:
    """The user's n unrated items with the highest predicted ratings.

    Ties break toward the smaller item index; rated items never appear.
    With explainable_only the candidate set is further restricted to items
    whose explainability score clears the matrix threshold, which is how
    the conditioned recommender assembles its list: recommendations are
    drawn from items that can be explained by the user's neighborhood.
    """
    matrix = split.train
    if not 0 <= user < matrix.n_users:
        raise ValueError(f"unknown user index {user}")
    if explainable_only and expl is None:
        raise ValueError("explainable_only requires an explainability matrix")
    m_row = expl.row(user) if expl is not None else np.zeros(matrix.n_items)
    preds = predict_ratings(
        params, matrix.normalized()[user], m_row, r_scale=matrix.r_scale
    )
    order = np.argsort(-preds, kind="stable")
    excluded = matrix.mask[user].copy()
    if explainable_only:
        excluded |= ~(expl.scores[user] > expl.theta)
    candidates = [int(i) for i in order if not excluded[i]]
    return candidates[:n]


@dataclass
class ModelStatistics:
    """Empirical pair-product means and standard errors from Gibbs chains."""

    vh_mean: np.ndarray
    vh_se: np.ndarray
    mh_mean: np.ndarray
    mh_se: np.ndarray
    n_chains: int


def gibbs_step(
    params: RbmParams,
    state: GibbsState,
    rng: np.random.Generator,
    clamp_m: bool = True,
) -> GibbsState:
    """One full sampling sweep (h, then v, then m unless clamped)."""
    h_prob = hidden_activation(params, state.v, state.m)
    h = (rng.random(h_prob.shape) < h_prob).astype(float)
    v_prob = visible_activation(params, h)
    v = (rng.random(v_prob.shape) < v_prob).astype(float)
    if clamp_m:
        m = state.m
    else:
        m_prob = explainability_activation(params, h)
        m = (rng.random(m_prob.shape) < m_prob).astype(float)
    return GibbsState(v, h, m, state.rated_mask)


def sample_model_statistics(
    params: RbmParams,
    m: np.ndarray,
    n_chains: int,
    burn_in: int,
    rng: np.random.Generator,
    clamp_m: bool = True,
) -> ModelStatistics:
    """Estimate model expectations <v_i h_j> and <m_i h_j> by Gibbs sampling.

    Runs n_chains independent chains from random initial states, discards
    burn_in sweeps, then records one (v, h, m) sample per chain.  Standard
    errors are per-coordinate sample std / sqrt(n_chains).
    """
    n = params.n_items
    m0 = np.broadcast_to(np.asarray(m, dtype=float), (n_chains, n)).copy()
    state = GibbsState(
        v=(rng.random((n_chains, n)) < 0.5).astype(float),
        h=np.zeros((n_chains, params.f)),
        m=m0,
    )
    for _ in range(burn_in):
        state = gibbs_step(params, state, rng, clamp_m=clamp_m)
    # Final h refresh so (v, h) is a joint draw at the recorded sweep.
    h_prob = hidden_activation(params, state.v, state.m)
    h = (rng.random(h_prob.shape) < h_prob).astype(float)

    def _pair_stats(left: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mean = left.T @ h / n_chains
        sq = (left ** 2).T @ (h ** 2) / n_chains
        var = np.maximum(sq - mean ** 2, 0.0)
        return mean, np.sqrt(var / n_chains)

    vh_mean, vh_se = _pair_stats(state.v)
    mh_mean, mh_se = _pair_stats(state.m)
    return ModelStatistics(vh_mean, vh_se, mh_mean, mh_se, n_chains)


def save_model(params: RbmParams, path: str | Path, mode: str = "conditioned") -> None:
    """Flat text persistence; predictions survive a round trip to <1e-6."""
    if mode not in EXPLAINABILITY_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MODEL_HEADER_PREFIX} f={params.f} n_items={params.n_items} mode={mode}\n")
        for matrix in (params.W, params.D):
            for row in matrix:
                fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
        for vec in (params.a, params.b, params.c):
            fh.write(" ".join(f"{x:.17g}" for x in vec) + "\n")


def load_model(path: str | Path) -> tuple[RbmParams, str]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith(MODEL_HEADER_PREFIX):
            raise ValueError(f"missing '{MODEL_HEADER_PREFIX}' header in {path}")
        meta = dict(part.split("=") for part in header.split()[2:])
        f = int(meta["f"])
        n_items = int(meta["n_items"])
        mode = meta["mode"]
        rows = [np.array(line.split(), dtype=float) for line in fh if line.strip()]
    expected = 2 * n_items + 3
    if len(rows) != expected:
        raise ValueError(f"model file has {len(rows)} data rows, expected {expected}")
    params = RbmParams(
        W=np.vstack(rows[:n_items]),
        D=np.vstack(rows[n_items:2 * n_items]),
        a=rows[2 * n_items],
        b=rows[2 * n_items + 1],
        c=rows[2 * n_items + 2],
    )
    params.validate()
    if params.f != f:
        raise ValueError(f"header f={f} does not match matrix width {params.f}")
    return params, mode
