"""Viewpoint retrieval benchmark toolkit."""

from .camera import (
    CANONICAL_VIEWS,
    SHAPENET,
    BoundingBox,
    CameraPose,
    ViewConvention,
    canonical_direction,
    pose_to_cartesian,
    radius_bounds,
)
from .goldeval import (
    GoldDistribution,
    RankedList,
    evaluate_model,
    gold_distribution,
    kl_divergence,
    normalize_map,
    precision_at_k,
    recall_at_k,
)
from .losses import (
    EmbeddingBatch,
    LossConfig,
    contrastive_loss,
    hard_negative_loss,
    random_contrast_loss,
    total_loss,
)
from .polysphere import Cell, PolySphere, build_sphere
from .provider import EmbeddingCache, Manifest, ManifestRecord, ablation_subsets, load_manifest, save_manifest
from .scorer import (
    CachedScorer,
    OracleProfile,
    Query,
    RemoteScorer,
    ScoreMap,
    ScorerError,
    compute_score_map,
    cosine,
    make_oracle,
    resolve_scorer,
    score_view,
)
from .search import (
    BayesConfig,
    CameraBounds,
    GreedyConfig,
    SearchTrace,
    bayesian_search,
    greedy_search,
    is_solved,
    run_benchmark,
)
from .viz import HexMapStyle, render_hexmap

__version__ = "0.1.0"
