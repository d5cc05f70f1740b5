"""Non-myopic Bayesian optimization with variance-reduced rollout."""

from .acquisitions import AcquisitionKind, Incumbent
from .domain import BoxBounds, latin_hypercube, unit_box
from .gp import Dataset, GPPosterior, NumericalError, fit_hyperparameters, posterior
from .harness import (
    DemoResult,
    Method,
    MismatchStudy,
    RunConfig,
    RunTrace,
    VarianceStudy,
    demo_scenario,
    fit_decay_rate,
    mismatch_study,
    run_bo,
    run_replications,
    variance_study,
)
from .kernels import KernelSpec, kernel_eval, kernel_matrix
from .objectives import ObjectiveSpec, eval_objective, gp_sampled, objective_by_name
from .policy_search import PolicyChoice, PolicySet, select_policy, usage_histogram
from .reporting import emit_outputs
from .rollout import RolloutConfig, RolloutEstimate, rollout_acquisition, simulate_trajectory
from .variance_reduction import (
    VRConfig,
    ZMatrix,
    cv_combine,
    first_step_covariates,
    make_zmatrix,
    sobol_points,
)

__all__ = [
    "AcquisitionKind",
    "BoxBounds",
    "Dataset",
    "DemoResult",
    "GPPosterior",
    "Incumbent",
    "KernelSpec",
    "Method",
    "MismatchStudy",
    "NumericalError",
    "ObjectiveSpec",
    "PolicyChoice",
    "PolicySet",
    "RolloutConfig",
    "RolloutEstimate",
    "RunConfig",
    "RunTrace",
    "VRConfig",
    "VarianceStudy",
    "ZMatrix",
    "cv_combine",
    "first_step_covariates",
    "demo_scenario",
    "emit_outputs",
    "eval_objective",
    "fit_decay_rate",
    "fit_hyperparameters",
    "gp_sampled",
    "kernel_eval",
    "kernel_matrix",
    "latin_hypercube",
    "make_zmatrix",
    "sobol_points",
    "mismatch_study",
    "objective_by_name",
    "posterior",
    "rollout_acquisition",
    "run_bo",
    "run_replications",
    "select_policy",
    "simulate_trajectory",
    "unit_box",
    "usage_histogram",
    "variance_study",
]

__version__ = "0.1.0"
