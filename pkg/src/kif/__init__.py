"""Kendall Interaction Filter: rank-based screening of feature couples for classification."""

__version__ = "0.1.0"

from .engine import (  # noqa: E402
    Dataset,
    PairScore,
    ScreeningConfig,
    ScreeningResult,
    default_top_d,
    kif_score,
    screen_all_pairs,
    select_couples,
    variance_prescreen,
)
from .permutation import PermutationPlan, permutation_pvalues, permutation_test  # noqa: E402
from .rank_stats import (  # noqa: E402
    ClassPartition,
    InsufficientClassSize,
    class_partition,
    conditional_kendall_tau,
    kendall_tau_fast,
    kendall_tau_naive,
)

__all__ = [
    "ClassPartition",
    "Dataset",
    "InsufficientClassSize",
    "PairScore",
    "PermutationPlan",
    "ScreeningConfig",
    "ScreeningResult",
    "class_partition",
    "conditional_kendall_tau",
    "default_top_d",
    "kendall_tau_fast",
    "kendall_tau_naive",
    "kif_score",
    "permutation_pvalues",
    "permutation_test",
    "screen_all_pairs",
    "select_couples",
    "variance_prescreen",
]
