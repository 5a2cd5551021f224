"""Onset-age Cox regression with prevalent cases via pairwise pseudolikelihood.

Observed cohorts mix incident cases (onset seen during follow-up) with
prevalent cases (onset reported retrospectively at recruitment). The
standard delayed-entry partial likelihood must drop the prevalent onsets;
the pairwise pseudolikelihood recovers them by conditioning each pair of
subjects on its order statistic, at the price of plug-in estimates for the
other illness-death transitions and censoring. This package provides the
data model, the plug-in partial-likelihood machinery, the subsampled
pairwise estimator, three bootstrap variance procedures, benchmark cohort
generators, and a BH-based replication workflow.
"""

__version__ = "0.1.0"

from .cox import (
    CoxFit,
    NuisanceSet,
    TransitionKind,
    breslow,
    fit_nuisance,
    fit_pl,
    pl_information,
)
from .data import (
    Cohort,
    IngestOptions,
    Observation,
    StepFunction,
    eval_step,
    ingest_csv,
    minmax_standardize,
    write_csv,
    zscore_covariates,
)
from .inference import (
    TestResult,
    bh_adjust,
    candidate_tests,
    stat_correlation_diag,
    wald_one_sided,
)
from .pairwise import (
    PairSchedule,
    PairTerm,
    PairwiseFit,
    PairwiseObjective,
    eta,
    fit_pairwise,
    log_zeta,
    pair_hessian,
    pair_loglik,
    pair_score,
    pair_term,
)
from .simulate import (
    ScenarioSpec,
    TruthRecord,
    custom_scenario,
    event_counts,
    gen_cohort,
    gen_covariates,
    make_scenario,
    sample_cox_time,
    scenario_a,
    scenario_b,
    scenario_c,
    write_truth_csv,
)
from .variance import (
    VarianceResult,
    bootstrap1,
    bootstrap2,
    bootstrap3,
    pair_score_outer,
    robust_se,
)

__all__ = [
    "__version__",
    "Cohort", "IngestOptions", "Observation", "StepFunction",
    "eval_step", "ingest_csv", "minmax_standardize", "write_csv",
    "zscore_covariates",
    "CoxFit", "NuisanceSet", "TransitionKind",
    "breslow", "fit_nuisance", "fit_pl", "pl_information",
    "PairSchedule", "PairTerm", "PairwiseFit", "PairwiseObjective",
    "eta", "fit_pairwise", "log_zeta", "pair_hessian", "pair_loglik",
    "pair_score", "pair_term",
    "VarianceResult", "bootstrap1", "bootstrap2", "bootstrap3",
    "pair_score_outer", "robust_se",
    "ScenarioSpec", "TruthRecord", "custom_scenario", "event_counts",
    "gen_cohort", "gen_covariates", "make_scenario", "sample_cox_time",
    "scenario_a", "scenario_b", "scenario_c", "write_truth_csv",
    "TestResult", "bh_adjust", "candidate_tests", "stat_correlation_diag",
    "wald_one_sided",
]
