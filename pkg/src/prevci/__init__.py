"""Confidence intervals for prevalence from imperfect antibody-test surveys."""

from .bootstrap import (
    BootstrapSample,
    bca_interval,
    bootstrap_distribution,
    percentile_interval,
)
from .estimate import (
    ConstrainedMleResult,
    MleResult,
    log_likelihood,
    mle_constrained,
    mle_unconstrained,
)
from .exact import (
    FUNCTIONAL_KINDS,
    GridCell,
    NuisanceRegion,
    cell_extremes,
    exact_interval,
    exact_p_values,
    exact_statistic_cdf,
    functional_exact_interval,
    functional_exact_p_values,
    functional_value,
    grid_cells,
    nuisance_region,
    offset_distribution,
)
from .harness import (
    METHODS,
    SWEEP_AXES,
    CoverageCell,
    CoverageReport,
    ExperimentConfig,
    default_sweep_values,
    emit_report,
    run_coverage,
    run_interval,
    run_sweep,
)
from .intervals import (
    DeltaVariance,
    IntervalResult,
    clopper_pearson,
    delta_interval,
    delta_variance,
    projection_interval,
)
from .invert import (
    ASYMPTOTIC_KINDS,
    InversionConfig,
    InversionResult,
    PValuePair,
    invert,
    p_values_asymptotic,
    p_values_bootstrap,
)
from .model import (
    ParamPoint,
    PrevalenceSplit,
    RngSeed,
    SampleSizes,
    SurveyCounts,
    b_vector,
    binomial_cdf,
    binomial_pmf,
    in_omega,
    prevalence_of,
    sample_counts,
)
from .stats import KINDS, StatValue, evaluate_statistic

__all__ = [
    "ASYMPTOTIC_KINDS",
    "BootstrapSample",
    "ConstrainedMleResult",
    "CoverageCell",
    "CoverageReport",
    "DeltaVariance",
    "ExperimentConfig",
    "FUNCTIONAL_KINDS",
    "GridCell",
    "IntervalResult",
    "InversionConfig",
    "InversionResult",
    "KINDS",
    "METHODS",
    "MleResult",
    "NuisanceRegion",
    "ParamPoint",
    "PValuePair",
    "PrevalenceSplit",
    "RngSeed",
    "SWEEP_AXES",
    "SampleSizes",
    "StatValue",
    "SurveyCounts",
    "b_vector",
    "bca_interval",
    "binomial_cdf",
    "binomial_pmf",
    "bootstrap_distribution",
    "cell_extremes",
    "clopper_pearson",
    "default_sweep_values",
    "delta_interval",
    "delta_variance",
    "emit_report",
    "evaluate_statistic",
    "exact_interval",
    "exact_p_values",
    "exact_statistic_cdf",
    "functional_exact_interval",
    "functional_exact_p_values",
    "functional_value",
    "grid_cells",
    "in_omega",
    "invert",
    "log_likelihood",
    "mle_constrained",
    "mle_unconstrained",
    "nuisance_region",
    "offset_distribution",
    "p_values_asymptotic",
    "p_values_bootstrap",
    "percentile_interval",
    "prevalence_of",
    "projection_interval",
    "run_coverage",
    "run_interval",
    "run_sweep",
    "sample_counts",
]
