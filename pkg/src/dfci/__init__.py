"""Distribution-free confidence intervals for a conditional mean with bounded response."""

from .core import (
    INF,
    CIParams,
    CIReport,
    DataError,
    Dataset,
    GroupSummary,
    MeanHypothesis,
    OrderedSupport,
    ParameterError,
    Sample,
    construct_ci,
    delta_hat,
    effective_support_estimate,
    group_summaries,
    z_statistic,
)
from .distributions import (
    Bernoulli,
    DiscreteDistributionSpec,
    FiniteSupport,
    LowerBoundParams,
    near_uniform,
    sample_dataset,
    theorem1_lower_bound,
    true_effective_support,
    uniform,
    variance_quantile,
)

__version__ = "0.1.0"
