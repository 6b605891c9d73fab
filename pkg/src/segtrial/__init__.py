"""Estimate randomised-trial outcome priors from threshold-allocated (segmental) data."""

from .bayes import (
    COUNT_BASED,
    PARAMETRIC_TAIL,
    PosteriorCurve,
    PriorEstimate,
    arr_curve,
    effect_summary,
    estimate_all_priors,
    estimate_prior,
    posterior_curve,
)
from .data import (
    AggregateBin,
    Segment,
    SegmentRule,
    SubjectRecord,
    TrialDataset,
    apply_segment_filter,
    bin_counts,
    load_dataset,
    parse_dataset,
    reconstruct_records_from_bins,
)
from .likelihood import (
    DichotomousLikelihoods,
    GaussianParams,
    OutcomeModel,
    TailAreas,
    check_intervention_independence,
    fit_log_gaussian,
    fit_outcome_model,
    interval_likelihood_ratio,
    normal_cdf,
    point_likelihood_ratio,
    tail_likelihood_ratio,
)
from .simulator import SimConfig, generate_trial, run_comparison, sweep_outcome_threshold
from .validation import bootstrap_prior_ci, calibration_check, exact_binomial_ci

__version__ = "0.1.0"
