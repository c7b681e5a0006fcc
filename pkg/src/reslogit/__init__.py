"""Residual logit discrete-choice models with MNL and MLP baselines."""

from .core import Dataset, DesignIndex, ModelKind, ModelTag, Parameters, Standardizer, UtilitySpec, build_design, count_parameters
from .grad import finite_diff_grad, grad_loglik, loglik_and_grad
from .model import NonFiniteError, log_likelihood, predict_proba, q_form_probabilities, residual_forward, softplus
from .stats import FitResult, SingularInformationWarning, aic, arc_elasticity, point_elasticity, sensitivity_ratios
from .train import TrainConfig, TrainingCurve, TrainingDiverged, train

__version__ = "0.1.0"
