"""Clipped stochastic first-order methods for heavy-tailed gradient noise.

High-probability convergence tooling for convex problems whose gradient
noise has finite variance but arbitrarily heavy tails: norm-clipped SGD and
a norm-clipped accelerated similar-triangles scheme, their theorem-derived
stepsize/clipping/batch schedules, restart wrappers for strongly convex
problems, synthetic test problems with machine-checkable smoothness
certificates, calibrated heavy-tailed noise models, and a reproducible
Monte-Carlo experiment harness.
"""

from ._engine import BallExitWarning, available_backends, default_backend
from .core import (
    HolderSmoothness,
    IterateDivergedError,
    NoiseModel,
    ProblemInstance,
    StochasticGradientSample,
    batched_stochastic_gradient,
    clip,
    clip_coordinates,
    finite_difference_check,
    gradient_norm_bound,
    holder_certificate_check,
)
from .harness import (
    METHODS,
    ClippedMomentCheck,
    ExperimentResult,
    ExperimentSpec,
    RateRegression,
    TrialSummary,
    binomial_gate,
    clipped_moment_check,
    clopper_pearson_lower,
    derive_parameters,
    rate_regression,
    run_experiment,
    theorem_iteration_curve,
)
from .problems import (
    NOISE_FAMILIES,
    PROBLEM_KINDS,
    IsotropicNoise,
    ProblemSpec,
    make_noise,
    make_problem,
    make_problem_with_payload,
)
from .records import RestartResult, RunRecord, StageOutcome
from .schedules import (
    ConfigError,
    RestartPlan,
    RestartStage,
    SGDConfig,
    SSTMConfig,
    check_schedule_bounds,
    restart_plan_sgd,
    restart_plan_sstm,
    sgd_theorem_params,
    sstm_schedule,
    sstm_theorem_params,
)
from .sgd import SGDState, run_clipped_sgd, run_restarted_sgd, sgd_step
from .sstm import SSTMState, run_restarted_sstm, run_sstm, sstm_step

__version__ = "0.1.0"

__all__ = [
    "BallExitWarning",
    "ClippedMomentCheck",
    "ConfigError",
    "ExperimentResult",
    "ExperimentSpec",
    "HolderSmoothness",
    "IsotropicNoise",
    "IterateDivergedError",
    "METHODS",
    "NOISE_FAMILIES",
    "NoiseModel",
    "PROBLEM_KINDS",
    "ProblemInstance",
    "ProblemSpec",
    "RateRegression",
    "RestartPlan",
    "RestartResult",
    "RestartStage",
    "RunRecord",
    "SGDConfig",
    "SGDState",
    "SSTMConfig",
    "SSTMState",
    "StageOutcome",
    "StochasticGradientSample",
    "TrialSummary",
    "available_backends",
    "batched_stochastic_gradient",
    "binomial_gate",
    "check_schedule_bounds",
    "clip",
    "clip_coordinates",
    "clipped_moment_check",
    "clopper_pearson_lower",
    "default_backend",
    "derive_parameters",
    "finite_difference_check",
    "gradient_norm_bound",
    "holder_certificate_check",
    "make_noise",
    "make_problem",
    "make_problem_with_payload",
    "rate_regression",
    "restart_plan_sgd",
    "restart_plan_sstm",
    "run_clipped_sgd",
    "run_experiment",
    "run_restarted_sgd",
    "run_restarted_sstm",
    "run_sstm",
    "sgd_step",
    "sgd_theorem_params",
    "sstm_schedule",
    "sstm_step",
    "sstm_theorem_params",
    "theorem_iteration_curve",
    "__version__",
]
