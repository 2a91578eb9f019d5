"""Audit user agency (reachability and stability) in matrix-factorization recommenders."""
from .audit import (
    AuditResult,
    AuditSpec,
    Metric,
    RatingParams,
    baseline_reachability,
    future_reachability_objective,
    future_stability_objective,
    past_reachability_objective,
    past_stability_objective,
    run_audit,
)
from .blackbox import BlackBoxQuery, MfAdapter, blackbox_query
from .dataset import (
    Dataset,
    HoldoutSplit,
    Interaction,
    activity_rank,
    holdout_split,
    load_movielens,
    parse_movielens,
    popularity_rank,
    summary_stats,
)
from .distances import hellinger, l2_distance
from .errors import (
    BudgetError,
    ConfigError,
    DataError,
    EmptyCandidatesError,
    NumericalError,
    ParseError,
    PreconditionError,
    RecauditError,
    SingularSystemError,
    TrainingDivergedError,
    UnknownIdError,
    UnsupportedModeError,
)
from .kernels import BACKEND
from .mf import (
    MfConfig,
    MfModel,
    load_model,
    save_model,
    score,
    train_mf,
    update_item_vector,
    update_user_vector,
)
from .optim import (
    OptimizerConfig,
    analytic_gradient,
    extreme_point_oracle,
    projected_gradient_ascent,
    zeroth_order_gradient,
)
from .policy import (
    RecommendationDistribution,
    RecPolicy,
    candidate_set,
    sample,
    softmax_distribution,
    top_one,
)

__version__ = "0.1.0"
