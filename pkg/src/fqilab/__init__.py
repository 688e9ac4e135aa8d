"""fqilab: fitted Q-iteration with switchable log/squared loss, control-task
experiments at desk scale, and numerical verification of the supporting
inequality chain on tabular MDPs."""

__version__ = "0.1.0"

from .losses import LossKind, log_loss, squared_loss, hellinger_sq, triangular_dev
from .tabular import (
    TabularMdp,
    bellman_apply,
    concentrability,
    greedy_policy_of,
    occupancy,
    optimal_q,
    policy_q,
    random_mdp,
    value_of,
)
from .bfgs import BfgsOptions, BfgsResult, Termination, bfgs_minimize
from .features import (
    BoxBounds,
    FourierBasis,
    SigmoidLinearModel,
    TabularQModel,
    empirical_objective,
    fourier_features,
    model_gradient,
    model_predict,
    tabular_fit,
)
from .fqi import (
    FqiConfig,
    FqiRun,
    SigmoidModelClass,
    TabularModelClass,
    compute_targets,
    compute_targets_dataset,
    fqi_finite_horizon,
    fqi_stationary,
    greedy_action,
)
from .envs import (
    InvertedPendulum,
    MountainCar,
    Trajectory,
    evaluate_policy,
    make_env,
    rollout,
)
from .data import Dataset, Transition, collect, load, save, take_prefix
from .theory import (
    TheoryReport,
    XiDelta,
    concentration_experiment,
    verify_all,
    verify_contraction_suite,
    verify_decomposition_suite,
    verify_norm_inequalities,
    verify_pointwise_inequalities,
)
from .experiment import ExperimentConfig, load_config, report, run_experiment

__all__ = [name for name in dir() if not name.startswith("_")]
