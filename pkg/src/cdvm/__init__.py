"""Attribution-driven data pruning at desk scale.

The package estimates per-test influence of training instances by maximum
sample reuse, selects retention subsets through a budget-constrained linear
program with top-S rounding, provides exact and sampled semi-value
baselines, and benchmarks everything against brute-force oracles.
"""

from .attribution import (
    AttributionMatrix,
    MsrConfig,
    banzhaf_from_T,
    load_T,
    msr_estimate,
    save_T,
    sparsify,
)
from .bench import (
    DEFAULT_LEVELS,
    RemovalCurve,
    RetentionReport,
    frequency_spectrum,
    normalize_performance,
    overlap_coefficient,
    overlap_matrix,
    pruning_order_from_values,
    removal_curve,
    retention_eval,
)
from .dataset import (
    LabeledDataset,
    LearnerSpec,
    accuracy,
    correctness_vector,
    gen_clustered,
    load_dataset,
    preset_dataset,
    save_dataset,
    train_learner,
)
from .games import ClusteredGame, Game, LearnerGame, char_value, marginal
from .pruning import (
    CdvmProblem,
    CdvmSolution,
    ClusterBlocks,
    SolverError,
    build_problem,
    default_kappa,
    enumerate_exact,
    grid_search,
    round_top_s,
    solve_lp,
    surrogate_objective,
    verify_cluster_coverage,
)
from .rng import derive_seed, make_rng
from .semivalues import (
    ValueVector,
    cluster_banzhaf_closed_form,
    cluster_shapley_closed_form,
    dataoob,
    exact_banzhaf,
    exact_shapley,
    load_values,
    loo,
    mc_shapley,
    save_values,
)

__version__ = "0.1.0"
