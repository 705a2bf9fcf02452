"""Lasso-penalized soft-max gated mixture of Gaussian experts (SGaME) regression."""

from .exceptions import (
    BoundsViolationError,
    EmptyComponentError,
    FitFailedError,
    NotPositiveDefiniteError,
    SgameError,
    TheoremHypothesisError,
)
from .model import (
    Dataset,
    ExpertParams,
    GatingParams,
    ParameterBounds,
    SgameParams,
    check_in_class,
    gradient_envelope,
    log_density,
    log_density_gradient,
    penalty,
    project_to_bounds,
    random_params,
    sample,
    softmax_gates,
)
from .estimator import FitConfig, FitResult, fit_ball_constrained, fit_lasso, select_ball
from .sklearn_api import SGaMERegressor

__version__ = "0.1.0"
