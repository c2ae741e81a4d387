"""Bayesian model averaging over sequential Monte Carlo estimators."""

from .errors import (
    DegenerateStateError,
    EnsembleZeroEvidenceError,
    InvalidArgumentError,
    InvalidConfigurationError,
    NoSupportError,
    QmavgError,
    ZeroEvidenceError,
)
from .selection import (
    CriterionScore,
    ModelEnsemble,
    aic,
    bayes_factor,
    bic,
    max_log_likelihood,
    model_average_estimate,
    prune,
    run_criteria_report,
    update_ensemble,
)
from .smc import (
    ModelHypothesis,
    ParticleCloud,
    ResamplingPolicy,
    bayes_update,
    effective_sample_size,
    evidence,
    init_cloud,
    posterior_mean,
    resample_liu_west,
)

__version__ = "0.1.0"
