"""Post-estimation statistics.

Standard errors follow the total-sample convention: the Hessian is that of
the summed log-likelihood, and the classical covariance is its negative
inverse with no further division by N.  Curvature is taken over beta with
the layer matrices held at their estimates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .core import Dataset, DesignIndex, ModelKind, Parameters, Standardizer, UtilitySpec
from .grad import beta_scores, log_prob_jacobian, loglik_and_grad
from .model import linear_utility, log_softmax, output_utilities, predict_log_proba

Z_CRIT = NormalDist().inv_cdf(0.975)
SE_CONVENTION = "sqrt(diag((-H)^-1)), H = Hessian of the total training log-likelihood over beta at fixed layer matrices"


class SingularInformationWarning(UserWarning):
    """-H is not positive definite; affected coordinates get NaN standard errors."""


@dataclass(frozen=True)
class FitResult:
    kind: ModelKind
    spec: UtilitySpec
    alt_names: tuple[str, ...]
    attribute_names: tuple[str, ...]
    params: Parameters
    final_ll: float
    validation_ll: float
    n_parameters: int
    aic: float
    std_err: np.ndarray
    robust_std_err: np.ndarray
    validation_accuracy: float
    n_train: int
    n_valid: int
    best_iteration: int
    iterations_run: int
    stop_reason: str
    standardizer: Standardizer
    significant: np.ndarray = field(init=False)

    def __post_init__(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.abs(self.params.beta) / self.std_err
        object.__setattr__(self, "significant", np.where(np.isfinite(z), z > Z_CRIT, False))

    @property
    def design(self) -> DesignIndex:
        slots = (("ASC",) if self.spec.include_asc else ()) + self.spec.variables
        columns = tuple(self.attribute_names.index(v) for v in self.spec.variables)
        return DesignIndex(slots, columns, len(self.alt_names), self.spec.reference_alt, self.spec.include_asc)


def hessian(params: Parameters, dataset: Dataset, design: DesignIndex, kind: ModelKind,
            step: float = 1e-5) -> np.ndarray:
    """Beta-block Hessian by central differences of the analytic gradient, symmetrized."""
    params.check(design, kind)
    Z = design.regressors(dataset.attributes)
    k = design.n_beta
    H = np.empty((k, k))
    beta = np.array(params.beta)
    for i in range(k):
        up = beta.copy()
        up[i] += step
        dn = beta.copy()
        dn[i] -= step
        g_up = loglik_and_grad(params.with_beta(up), Z, dataset.choices, design, kind)[1].d_beta
        g_dn = loglik_and_grad(params.with_beta(dn), Z, dataset.choices, design, kind)[1].d_beta
        H[:, i] = (g_up - g_dn) / (2 * step)
    if not np.all(np.isfinite(H)):
        bad = np.argwhere(~np.isfinite(H))[0]
        raise FloatingPointError(f"non-finite Hessian entry at {tuple(int(b) for b in bad)}")
    return (H + H.T) / 2


def _inverse_information(H: np.ndarray, rtol: float = 1e-7):
    """Pseudo-inverse of -H plus a mask of coordinates touched by flat or
    wrong-signed directions."""
    info = -(np.asarray(H, dtype=float) + np.asarray(H, dtype=float).T) / 2
    w, Q = np.linalg.eigh(info)
    scale = max(np.abs(w).max(initial=0.0), np.finfo(float).tiny)
    good = w > rtol * scale
    cov = (Q[:, good] / w[good]) @ Q[:, good].T
    flagged = np.zeros(info.shape[0], dtype=bool)
    if not np.all(good):
        flagged = np.any(np.abs(Q[:, ~good]) > 1e-6, axis=1)
        warnings.warn(
            f"-H is not positive definite ({int((~good).sum())} non-positive directions); "
            f"standard errors undefined for coordinates {np.flatnonzero(flagged).tolist()}",
            SingularInformationWarning,
            stacklevel=3,
        )
    cov[flagged, :] = np.nan
    cov[:, flagged] = np.nan
    return cov, flagged


def classical_covariance(H: np.ndarray) -> np.ndarray:
    return _inverse_information(H)[0]


def robust_covariance(H: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """(-H)^-1 B (-H)^-1 with B the summed outer product of per-observation scores."""
    scores = np.asarray(scores, dtype=float)
    inv, flagged = _inverse_information(H)
    B = scores.T @ scores
    inv0 = np.where(flagged[:, None] | flagged[None, :], 0.0, inv)
    cov = inv0 @ B @ inv0
    cov[flagged, :] = np.nan
    cov[:, flagged] = np.nan
    return cov


def _sqrt_diag(cov: np.ndarray) -> np.ndarray:
    d = np.diag(cov).copy()
    d[d < 0] = np.nan
    return np.sqrt(d)


def std_errors(H: np.ndarray) -> np.ndarray:
    """sqrt(diag((-H)^-1)); NaN, with a warning, where -H is degenerate."""
    return _sqrt_diag(classical_covariance(H))


def robust_std_errors(H: np.ndarray, scores: np.ndarray) -> np.ndarray:
    return _sqrt_diag(robust_covariance(H, scores))


def transform_covariance(cov: np.ndarray, T: np.ndarray) -> np.ndarray:
    """T cov T^T, keeping NaN only where a flagged coordinate actually enters."""
    flagged = np.isnan(np.diag(cov))
    out = T @ np.nan_to_num(cov, nan=0.0) @ T.T
    touched = np.any(T[:, flagged] != 0, axis=1)
    out[touched, :] = np.nan
    out[:, touched] = np.nan
    return out


def aic(k: int, ll: float) -> float:
    return 2.0 * k - 2.0 * ll


def accuracy(params: Parameters, dataset: Dataset, design: DesignIndex, kind: ModelKind) -> float:
    """Share of observations whose most probable alternative was chosen.

    Ties go to the lowest alternative index.
    """
    logp = predict_log_proba(params, dataset, design, kind)
    return float(np.mean(np.argmax(logp, axis=1) == dataset.choices))


def _check_continuous(dataset: Dataset, variable: str) -> np.ndarray:
    if variable not in dataset.attribute_names:
        raise ValueError(f"unknown variable {variable!r}")
    x = dataset.column(variable)
    if np.all((x == 0) | (x == 1)):
        raise ValueError(f"{variable!r} is a 0/1 dummy; elasticities are undefined for dummies")
    return x


def _variable_coefs(params: Parameters, design: DesignIndex, dataset: Dataset, variable: str) -> np.ndarray:
    """dV_j/dx for every alternative (zero when the variable is not in the utilities)."""
    coef = design.coef_matrix(params.beta)
    col = dataset.attribute_names.index(variable)
    if col not in design.columns:
        return np.zeros(design.n_alts)
    return coef[design.columns.index(col) + int(design.include_asc)]


def probability_derivative(params: Parameters, dataset: Dataset, design: DesignIndex, kind: ModelKind,
                           variable: str) -> np.ndarray:
    """Analytic dP_n(i)/dx_n through the whole forward graph (N x J)."""
    params.check(design, kind)
    V = linear_utility(params, dataset.attributes, design)
    jac = log_prob_jacobian(params, V, kind)
    P = np.exp(log_softmax(output_utilities(params, V, kind)))
    return P * (jac @ _variable_coefs(params, design, dataset, variable))


def point_elasticities(params: Parameters, dataset: Dataset, design: DesignIndex, kind: ModelKind,
                       variable: str) -> np.ndarray:
    """Per-observation x dlnP(i)/dx for every alternative (N x J)."""
    params.check(design, kind)
    x = _check_continuous(dataset, variable)
    V = linear_utility(params, dataset.attributes, design)
    jac = log_prob_jacobian(params, V, kind)
    return x[:, None] * (jac @ _variable_coefs(params, design, dataset, variable))


def _aggregate(values: np.ndarray, probs: np.ndarray, weighting: str) -> np.ndarray:
    if weighting == "mean":
        return values.mean(axis=0)
    if weighting == "probability":
        return (probs * values).sum(axis=0) / probs.sum(axis=0)
    raise ValueError(f"unknown weighting {weighting!r}")


def point_elasticity(params: Parameters, dataset: Dataset, design: DesignIndex, kind: ModelKind,
                     variable: str, alternative: int, weighting: str = "mean") -> float:
    """Aggregate point elasticity of P(alternative) with respect to ``variable``.

    Per-observation elasticities are averaged; ``weighting="probability"``
    weights each by its predicted P(alternative) instead.
    """
    E = point_elasticities(params, dataset, design, kind, variable)
    P = np.exp(predict_log_proba(params, dataset, design, kind))
    return float(_aggregate(E, P, weighting)[alternative])


def _arc_all(params, dataset, design, kind, variable, delta_pct, weighting="mean"):
    if delta_pct == 0:
        raise ValueError("delta_pct must be non-zero")
    x = _check_continuous(dataset, variable)
    frac = delta_pct / 100.0
    logp = predict_log_proba(params, dataset, design, kind)
    attrs = np.array(dataset.attributes)
    attrs[:, dataset.attribute_names.index(variable)] = x * (1.0 + frac)
    logp_hat = predict_log_proba(params, dataset.with_attributes(attrs), design, kind)
    if not (np.all(np.isfinite(logp)) and np.all(logp > -700)):
        raise FloatingPointError("choice probability underflow in arc elasticity")
    E = np.expm1(logp_hat - logp) / frac
    return _aggregate(E, np.exp(logp), weighting)


def arc_elasticity(params: Parameters, dataset: Dataset, design: DesignIndex, kind: ModelKind,
                   variable: str, alternative: int, delta_pct: float, weighting: str = "mean") -> float:
    """(P(x(1+d)) - P(x)) / (d P(x)) averaged over observations; d = delta_pct / 100."""
    return float(_arc_all(params, dataset, design, kind, variable, delta_pct, weighting)[alternative])


DEFAULT_ARC_GRID = (-50.0, -40.0, -30.0, -20.0, -10.0, 10.0, 20.0, 30.0, 40.0, 50.0)


@dataclass(frozen=True)
class ElasticityReport:
    variable: str
    alt_names: tuple[str, ...]
    point: np.ndarray
    arc_grid: tuple[float, ...]
    arc: np.ndarray  # len(arc_grid) x J


def elasticity_report(params: Parameters, dataset: Dataset, design: DesignIndex, kind: ModelKind,
                      variable: str, grid: Sequence[float] = DEFAULT_ARC_GRID,
                      weighting: str = "mean") -> ElasticityReport:
    grid = tuple(float(d) for d in grid)
    if sorted(grid) != sorted(-d for d in grid):
        raise ValueError("arc grid must be symmetric around 0")
    E = point_elasticities(params, dataset, design, kind, variable)
    P = np.exp(predict_log_proba(params, dataset, design, kind))
    point = _aggregate(E, P, weighting)
    arc = np.array([_arc_all(params, dataset, design, kind, variable, d, weighting) for d in grid])
    arc = arc.reshape(len(grid), design.n_alts)
    if not (np.all(np.isfinite(point)) and np.all(np.isfinite(arc))):
        raise FloatingPointError("non-finite elasticity")
    return ElasticityReport(variable, dataset.alt_names, point, grid, arc)


@dataclass(frozen=True)
class SensitivityTable:
    """Ratio of a variable's mean utility contribution to each dummy's.

    ``ratios[d, j]`` is NaN (and ``undefined[d, j]`` True) where the dummy's
    contribution to alternative j is zero.  ``stddev`` is the population
    standard deviation across dummies, over the defined cells.
    """

    variable: str
    dummies: tuple[str, ...]
    alt_names: tuple[str, ...]
    ratios: np.ndarray
    undefined: np.ndarray
    stddev: np.ndarray


def sensitivity_ratios(params: Parameters, dataset: Dataset, design: DesignIndex, variable_a: str,
                       dummy_set: Sequence[str]) -> SensitivityTable:
    dummies = tuple(dummy_set)
    for d in dummies:
        if d not in dataset.attribute_names:
            raise ValueError(f"unknown variable {d!r}")
        x = dataset.column(d)
        if not np.all((x == 0) | (x == 1)):
            raise ValueError(f"{d!r} is not a 0/1 dummy")
    num = _variable_coefs(params, design, dataset, variable_a) * dataset.column(variable_a).mean()
    den = np.array([_variable_coefs(params, design, dataset, d) * dataset.column(d).mean() for d in dummies])
    den = den.reshape(len(dummies), design.n_alts)
    undefined = den == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(undefined, np.nan, num[None, :] / np.where(undefined, 1.0, den))
    stddev = np.full(design.n_alts, np.nan)
    for j in range(design.n_alts):
        col = ratios[~undefined[:, j], j]
        if col.size:
            stddev[j] = col.std()
    return SensitivityTable(variable_a, dummies, dataset.alt_names, ratios, undefined, stddev)


def compute_standard_errors(params: Parameters, dataset: Dataset, design: DesignIndex, kind: ModelKind,
                            T: np.ndarray | None = None, step: float = 1e-5):
    """Classical and robust standard errors, optionally mapped through beta' = T beta."""
    H = hessian(params, dataset, design, kind, step=step)
    scores = beta_scores(params, dataset, design, kind)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularInformationWarning)
        cov = classical_covariance(H)
        rob = robust_covariance(H, scores)
    if np.any(np.isnan(np.diag(cov))):
        warnings.warn(
            f"standard errors undefined for beta coordinates {np.flatnonzero(np.isnan(np.diag(cov))).tolist()}",
            SingularInformationWarning,
            stacklevel=2,
        )
    if T is not None:
        cov = transform_covariance(cov, T)
        rob = transform_covariance(rob, T)
    return _sqrt_diag(cov), _sqrt_diag(rob)
