"""Policy-gradient estimation from exploration batches, with sensors.

Trial scores collected around a nominal policy are regressed on the
sampled policies to estimate the value gradient; feeding the trials'
sensor readings into the regression removes the score noise the sensors
explain and tightens the estimate.  The package provides the two
estimators and their variance laws, a leave-one-out search over sensor
projections, simulated tasks to run them on, a learned-dynamics sensor
pipeline for the arm task, a hill-climbing driver, and a command-line
experiment harness.
"""

from .config import Config, ConfigError, config_hash, load_config, parse_config_text
from .encoding import (
    EncodingError,
    EncodingSearchConfig,
    SensorProjection,
    estimate_gradient_encoded,
    loo_cost,
    optimize_projection,
)
from .estimators import (
    EstimationError,
    GradientEstimate,
    NoiseSpec,
    TrialBatch,
    TrialRecord,
    estimate_g1,
    estimate_g2,
    predicted_bias_g2,
    predicted_variance_g1,
    predicted_variance_g2,
    predicted_variance_g2_correlated,
    trial_from_line,
    trial_to_line,
)
from .search import (
    ESTIMATORS,
    LearningCurve,
    SearchConfig,
    StepRecord,
    evaluate_policy,
    hill_climb_step,
    run_learning_curve,
    sample_exploration_policies,
)

__all__ = [
    "Config",
    "ConfigError",
    "config_hash",
    "load_config",
    "parse_config_text",
    "EncodingError",
    "EncodingSearchConfig",
    "SensorProjection",
    "estimate_gradient_encoded",
    "loo_cost",
    "optimize_projection",
    "EstimationError",
    "GradientEstimate",
    "NoiseSpec",
    "TrialBatch",
    "TrialRecord",
    "estimate_g1",
    "estimate_g2",
    "predicted_bias_g2",
    "predicted_variance_g1",
    "predicted_variance_g2",
    "predicted_variance_g2_correlated",
    "trial_from_line",
    "trial_to_line",
    "ESTIMATORS",
    "LearningCurve",
    "SearchConfig",
    "StepRecord",
    "evaluate_policy",
    "hill_climb_step",
    "run_learning_curve",
    "sample_exploration_policies",
]

__version__ = "0.1.0"
