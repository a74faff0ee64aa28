"""Causal and regression models for cell-line drug perturbation response prediction."""

__version__ = "0.1.0"

from .types import (
    ConditionMatrix,
    EdgeMask,
    InteractionMatrix,
    PredictionResult,
    RegressionCoefficients,
    ResponseMatrix,
    TargetMap,
)
from .linear import (
    dag_to_w,
    matrix_exponential,
    predict_causal_dag,
    predict_causal_linear,
    predict_regression,
    verify_steady_state_limit,
    w_to_dag,
)
from .ode import OdeModel, Trajectory, integrate, steady_state
from .fit import (
    FitConfig,
    FitReport,
    causal_loss_and_gradient,
    fit_causal_linear,
    fit_causal_ode,
    fit_regression,
    fit_regression_lodo,
)
from .validate import (
    MetricReport,
    SplitPlan,
    averaged_random_fold_eval,
    lodo_eval,
    make_lodo_splits,
    make_random_folds,
    mae,
    pearson,
)
from .simulate import (
    Scenario,
    SimSpec,
    build_dag,
    build_design,
    build_targets,
    run_scenario,
    simulate_responses,
)

__all__ = [
    "ConditionMatrix",
    "ResponseMatrix",
    "TargetMap",
    "InteractionMatrix",
    "RegressionCoefficients",
    "EdgeMask",
    "PredictionResult",
    "predict_regression",
    "predict_causal_linear",
    "predict_causal_dag",
    "dag_to_w",
    "w_to_dag",
    "matrix_exponential",
    "verify_steady_state_limit",
    "OdeModel",
    "Trajectory",
    "integrate",
    "steady_state",
    "FitConfig",
    "FitReport",
    "fit_regression",
    "fit_regression_lodo",
    "fit_causal_linear",
    "fit_causal_ode",
    "causal_loss_and_gradient",
    "SplitPlan",
    "MetricReport",
    "make_random_folds",
    "make_lodo_splits",
    "averaged_random_fold_eval",
    "lodo_eval",
    "pearson",
    "mae",
    "SimSpec",
    "Scenario",
    "build_design",
    "build_targets",
    "build_dag",
    "simulate_responses",
    "run_scenario",
]
