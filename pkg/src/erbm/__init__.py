"""Explainability-conditioned RBM collaborative filtering."""

from .baselines import BaselineKind, most_popular_top_n, user_knn_predict
from .dataset import (
    DatasetSplit,
    ParseError,
    RatingMatrix,
    RatingRecord,
    RatingTable,
    denormalize,
    load_ratings,
    normalize,
    parse_ratings,
    temporal_split,
)
from .exact import ExactDistribution, exact_distribution
from .experiment import Cell, MetricsReport, run_experiment
from .explain import ExplanationStatement, render_explanation
from .metrics import mep, mer, ndcg_at_k, rmse
from .neighborhood import (
    ExplainabilityMatrix,
    NeighborModel,
    cosine_similarity,
    explainability_matrix,
    explainability_score,
    k_nearest_neighbors,
)
from .rbm import (
    CdDeltas,
    GibbsState,
    RbmParams,
    TrainConfig,
    TrainingDivergedError,
    TrainResult,
    cd_step,
    explainability_activation,
    hidden_activation,
    predict_ratings,
    top_n,
    train,
    visible_activation,
)

__version__ = "0.1.0"
