"""Batch Bayesian optimization by information gain about the maximizer.

The acquisition scores a whole batch of Q points jointly: the expected
reduction, in nats, of the entropy of the noisy observations once the
location of the global maximum is revealed. Expectations over the unknown
maximizer and hyperparameters are Monte-Carlo averages; the conditioned
(non-Gaussian) predictive is replaced by an expectation-propagation
Gaussian approximation whose log-determinants give the score in closed
form and which differentiates analytically for gradient-based batch
search.
"""

from .gp import (
    Dataset,
    Domain,
    GpHyper,
    MvnPredictive,
    empty_dataset,
    kernel,
    log_marginal_likelihood,
    posterior_predictive,
    sample_hyperparameters,
    unit_domain,
)
from .ep import (
    EpFailure,
    EpResult,
    SiteParams,
    batch_entropy,
    ep_condition,
    ep_condition_batch,
    ep_log_evidence,
)
from .maximizer import (
    MAP,
    RANDOM_FEATURE,
    MaximizerSample,
    RandomFeatureModel,
    draw_feature_model,
    map_maximizer,
    sample_maximizer_rf,
)
from .acquisition import (
    AcquisitionContext,
    build_context,
    optimize_batch,
    ppes_gradient,
    ppes_value,
    ppes_values,
)
from .baselines import (
    PolicyConfig,
    UcbSchedule,
    default_schedule,
    ei_mcmc_batch,
    expected_improvement,
    gp_bucb_batch,
    gp_ucb_pe_batch,
    select_batch,
    sm_ucb_batch,
)
from .objectives import (
    Objective,
    make_rocket,
    make_synthetic,
    objective_by_name,
    observe,
    rocket_flight_time,
)
from .oracle import (
    GroundTruthSurface,
    ground_truth_ppes,
    kde_entropy_2d,
    surface_bootstrap_se,
)
from .harness import (
    ExperimentConfig,
    RegretTrace,
    aggregate,
    recommend,
    run_experiment,
    run_many,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Domain",
    "GpHyper",
    "MvnPredictive",
    "empty_dataset",
    "kernel",
    "log_marginal_likelihood",
    "posterior_predictive",
    "sample_hyperparameters",
    "unit_domain",
    "EpFailure",
    "EpResult",
    "SiteParams",
    "batch_entropy",
    "ep_condition",
    "ep_condition_batch",
    "ep_log_evidence",
    "MAP",
    "RANDOM_FEATURE",
    "MaximizerSample",
    "RandomFeatureModel",
    "draw_feature_model",
    "map_maximizer",
    "sample_maximizer_rf",
    "AcquisitionContext",
    "build_context",
    "optimize_batch",
    "ppes_gradient",
    "ppes_value",
    "ppes_values",
    "PolicyConfig",
    "UcbSchedule",
    "default_schedule",
    "ei_mcmc_batch",
    "expected_improvement",
    "gp_bucb_batch",
    "gp_ucb_pe_batch",
    "select_batch",
    "sm_ucb_batch",
    "Objective",
    "make_rocket",
    "make_synthetic",
    "objective_by_name",
    "observe",
    "rocket_flight_time",
    "GroundTruthSurface",
    "ground_truth_ppes",
    "kde_entropy_2d",
    "surface_bootstrap_se",
    "ExperimentConfig",
    "RegretTrace",
    "aggregate",
    "recommend",
    "run_experiment",
    "run_many",
]
