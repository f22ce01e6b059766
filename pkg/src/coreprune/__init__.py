"""
Dataset core-pruning and offline evaluation for implicit-feedback
recommender data.
"""

__version__ = "0.1.0"

from .characteristics import CharacteristicsReport, characterize, derive_stats, gini
from .corefilter import (
    CoresetDescriptor,
    PruneMode,
    RetentionReport,
    prune,
    prune_items,
    prune_recursive,
    prune_users,
    retention,
    retention_pct,
)
from .dataset import (
    InteractionLog,
    LogFormat,
    ParseError,
    PipelineConfig,
    RawInteraction,
    binarize,
    build_log,
    downsample,
    parse_log,
    read_log,
)
from .experiment import EvalRecord, GridResult, run_grid
from .metrics import MetricSpec, aggregate, ndcg_at_k, precision_at_k, recall_at_k
from .recommenders import RecommenderSpec, top_k
from .splitter import SplitPair, build_phase2_test, export_atomic, split_per_user, split_phase2
