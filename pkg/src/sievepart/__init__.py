"""Sieve maximum-likelihood density estimation on adaptive binary partitions."""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    BinaryPartition,
    BudgetExceeded,
    DyadicRegion,
    common_refinement,
    enumerate_partitions,
    split_region,
)
from .density import (  # noqa: E402
    DensityOracle,
    HistogramDensity,
    evaluate,
    hellinger,
    hellinger_vs_oracle,
    kullback_leibler,
)
from .estimator import (  # noqa: E402
    GreedyOptions,
    RateParameters,
    exhaustive_fit,
    greedy_fit,
    mle_weights,
    partition_score,
    select_sieve_size,
    tabulate_counts,
    theoretical_rate,
)
from .haar import (  # noqa: E402
    HaarIndex,
    HaarSpectrum,
    estimate_decay_exponent,
    haar_analyze,
    haar_reconstruct,
    mixed_holder_constant,
    top_k_density,
)
from .synth import builtin, eval_density, sample_density  # noqa: E402
from .harness import (  # noqa: E402
    ExperimentReport,
    run_convergence_study,
    run_sparsity_diagnostic,
    run_variable_selection_study,
)

__all__ = [
    "__version__",
    "BinaryPartition",
    "BudgetExceeded",
    "DyadicRegion",
    "common_refinement",
    "enumerate_partitions",
    "split_region",
    "DensityOracle",
    "HistogramDensity",
    "evaluate",
    "hellinger",
    "hellinger_vs_oracle",
    "kullback_leibler",
    "GreedyOptions",
    "RateParameters",
    "exhaustive_fit",
    "greedy_fit",
    "mle_weights",
    "partition_score",
    "select_sieve_size",
    "tabulate_counts",
    "theoretical_rate",
    "HaarIndex",
    "HaarSpectrum",
    "estimate_decay_exponent",
    "haar_analyze",
    "haar_reconstruct",
    "mixed_holder_constant",
    "top_k_density",
    "ExperimentReport",
    "run_convergence_study",
    "run_sparsity_diagnostic",
    "run_variable_selection_study",
    "builtin",
    "eval_density",
    "sample_density",
]
