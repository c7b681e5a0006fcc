"""Mini-batch RMSprop estimation with validation-based early stopping."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Dataset,
    DesignIndex,
    ModelKind,
    ModelTag,
    Parameters,
    Standardizer,
    UtilitySpec,
    build_design,
    count_parameters,
)
from .grad import Gradient, loglik_and_grad
from .model import NonFiniteError, log_softmax, output_utilities
from .stats import FitResult, aic, compute_standard_errors

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Estimation settings.

    ``max_iterations`` and ``patience`` count epochs: the validation set is
    checkpointed once per pass over the training data.
    """

    batch_size: int = 64
    learning_rate: float = 1e-3
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    max_iterations: int = 200
    patience: int = 20
    seed: int = 0
    split_fraction: float = 0.7
    standardize: bool = True
    mlp_init_scale: float | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.rmsprop_decay < 1:
            raise ValueError("rmsprop_decay must lie in (0, 1)")
        if not self.rmsprop_epsilon > 0:
            raise ValueError("rmsprop_epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if not 0 < self.split_fraction < 1:
            raise ValueError(f"split_fraction must lie in (0, 1), got {self.split_fraction}")
        if self.mlp_init_scale is not None and not self.mlp_init_scale > 0:
            raise ValueError("mlp_init_scale must be positive")


@dataclass(frozen=True)
class CurvePoint:
    iteration: int
    train_ll: float
    valid_ll: float
    valid_error: float


@dataclass
class TrainingCurve:
    records: list[CurvePoint] = field(default_factory=list)

    HEADER = "iteration,train_ll,valid_ll,valid_error"

    def append(self, point: CurvePoint) -> None:
        if self.records and point.iteration <= self.records[-1].iteration:
            raise ValueError("curve iterations must be strictly increasing")
        self.records.append(point)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.HEADER + "\n")
        for r in self.records:
            buf.write(f"{r.iteration},{r.train_ll!r},{r.valid_ll!r},{r.valid_error!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainingCurve":
        lines = text.strip().splitlines()
        if not lines or lines[0].strip() != cls.HEADER:
            raise ValueError(f"expected header {cls.HEADER!r}")
        curve = cls()
        for line in lines[1:]:
            it, tr, va, err = line.split(",")
            curve.append(CurvePoint(int(it), float(tr), float(va), float(err)))
        return curve


class TrainingDiverged(RuntimeError):
    """Raised when the validation likelihood stops being finite.

    ``snapshot`` holds the best finite parameters seen so far (on the
    standardized scale used during training) and ``curve`` the checkpoints.
    """

    def __init__(self, message: str, snapshot: Parameters, curve: TrainingCurve):
        super().__init__(message)
        self.snapshot = snapshot
        self.curve = curve


def split_dataset(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded random partition into floor(fraction * N) training rows and the rest."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n = dataset.n_obs
    n_train = math.floor(fraction * n)
    if n_train == 0 or n_train == n:
        raise ValueError(f"a {fraction} split of {n} observations leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))


def init_parameters(spec: UtilitySpec, kind: ModelKind, n_alts: int, seed: int = 0,
                    mlp_init_scale: float | None = None) -> Parameters:
    """Zero betas; identity residual matrices; seeded uniform MLP weights.

    MLP weights are drawn from U(-s, s) with s = 1/sqrt(J) unless
    ``mlp_init_scale`` overrides it.
    """
    beta = np.zeros(spec.beta_length(n_alts))
    if kind.tag is ModelTag.RESLOGIT:
        return Parameters(beta, tuple(np.eye(n_alts) for _ in range(kind.depth)))
    if kind.tag is ModelTag.MLP:
        s = 1.0 / math.sqrt(n_alts) if mlp_init_scale is None else mlp_init_scale
        rng = np.random.default_rng([seed, 2])
        return Parameters(beta, tuple(rng.uniform(-s, s, (n_alts, n_alts)) for _ in range(kind.depth)))
    return Parameters(beta)


@dataclass(frozen=True)
class RMSpropState:
    r: np.ndarray

    @classmethod
    def zeros_like(cls, params: Parameters) -> "RMSpropState":
        return cls(np.zeros(params.flatten().size))


def rmsprop_step(params: Parameters, grad: Gradient, state: RMSpropState, cfg: TrainConfig):
    """One RMSprop descent step on an objective whose gradient is ``grad``.

    r <- rho r + (1 - rho) g^2;  p <- p - eta g / (sqrt(r) + eps).
    To climb the log-likelihood pass the gradient of its negative.
    """
    g = grad.flatten()
    if g.shape != state.r.shape:
        raise ValueError("optimizer state does not match the parameter layout")
    rho = cfg.rmsprop_decay
    r = rho * state.r + (1.0 - rho) * g * g
    flat = params.flatten() - cfg.learning_rate * g / (np.sqrt(r) + cfg.rmsprop_epsilon)
    if not np.all(np.isfinite(flat)):
        bad = np.flatnonzero(~np.isfinite(flat))
        raise FloatingPointError(f"non-finite RMSprop update at coordinates {bad[:10].tolist()}")
    return params.unflatten(flat), RMSpropState(r)


def _evaluate(params: Parameters, Z: np.ndarray, choices: np.ndarray, design: DesignIndex, kind: ModelKind):
    with np.errstate(over="ignore", invalid="ignore"):
        V = Z @ design.coef_matrix(params.beta)
        logp = log_softmax(output_utilities(params, V, kind))
        ll = float(logp[np.arange(len(choices)), choices].sum())
    err = float(np.mean(np.argmax(logp, axis=1) != choices))
    return ll, err


def fit_parameters(train_ds: Dataset, valid_ds: Dataset, design: DesignIndex, kind: ModelKind,
                   cfg: TrainConfig, init: Parameters):
    """Run the SGD loop on already-prepared data.

    Returns (best parameters, curve, best epoch, epochs run, stop reason).
    """
    if cfg.batch_size > train_ds.n_obs:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds the {train_ds.n_obs} training observations")
    Z_tr = design.regressors(train_ds.attributes)
    Z_va = design.regressors(valid_ds.attributes)
    y_tr, y_va = train_ds.choices, valid_ds.choices
    rng = np.random.default_rng([cfg.seed, 1])
    params = init
    state = RMSpropState.zeros_like(params)
    curve = TrainingCurve()
    best, best_ll, best_epoch, wait = params, -math.inf, 0, 0
    n, bs = train_ds.n_obs, cfg.batch_size
    reason = "max_iterations"
    epoch = 0
    for epoch in range(1, cfg.max_iterations + 1):
        perm = rng.permutation(n)
        try:
            for start in range(0, n, bs):
                idx = perm[start:start + bs]
                _, g = loglik_and_grad(params, Z_tr[idx], y_tr[idx], design, kind)
                scale = -1.0 / len(idx)
                loss_grad = Gradient(g.d_beta * scale, tuple(t * scale for t in g.d_thetas))
                params, state = rmsprop_step(params, loss_grad, state, cfg)
            train_ll, _ = _evaluate(params, Z_tr, y_tr, design, kind)
            valid_ll, valid_err = _evaluate(params, Z_va, y_va, design, kind)
        except (FloatingPointError, ValueError) as exc:
            raise TrainingDiverged(f"training diverged in epoch {epoch}: {exc}", best, curve) from exc
        if not (math.isfinite(train_ll) and math.isfinite(valid_ll)):
            raise TrainingDiverged(f"training diverged in epoch {epoch}: log-likelihood not finite", best, curve)
        curve.append(CurvePoint(epoch, train_ll, valid_ll, valid_err))
        logger.debug("epoch %d train_ll=%.4f valid_ll=%.4f", epoch, train_ll, valid_ll)
        if valid_ll > best_ll:
            best, best_ll, best_epoch, wait = params, valid_ll, epoch, 0
        else:
            wait += 1
            if wait >= cfg.patience:
                reason = "early_stopping"
                break
    return best, curve, best_epoch, epoch, reason


def train(dataset: Dataset, spec: UtilitySpec, kind: ModelKind, cfg: TrainConfig,
          compute_errors: bool = True) -> tuple[FitResult, TrainingCurve]:
    """Split, standardize, estimate, and summarize one model.

    The returned parameters and standard errors are on the raw attribute
    scale; the standardization is folded back into the coefficients.
    """
    design = build_design(dataset, spec)
    train_raw, valid_raw = split_dataset(dataset, cfg.split_fraction, cfg.seed)
    if cfg.standardize:
        std = Standardizer.fit(train_raw.attributes, center=spec.include_asc)
    else:
        std = Standardizer.identity(len(dataset.attribute_names))
    train_ds = train_raw.with_attributes(std.transform(train_raw.attributes))
    valid_ds = valid_raw.with_attributes(std.transform(valid_raw.attributes))
    init = init_parameters(spec, kind, dataset.n_alts, cfg.seed, cfg.mlp_init_scale)
    best, curve, best_epoch, epochs, reason = fit_parameters(train_ds, valid_ds, design, kind, cfg, init)

    T = std.beta_to_raw(design)
    Z_tr = design.regressors(train_ds.attributes)
    Z_va = design.regressors(valid_ds.attributes)
    final_ll, _ = _evaluate(best, Z_tr, train_ds.choices, design, kind)
    valid_ll, valid_err = _evaluate(best, Z_va, valid_ds.choices, design, kind)
    if compute_errors:
        se, rse = compute_standard_errors(best, train_ds, design, kind, T=T)
    else:
        se = rse = np.full(design.n_beta, np.nan)
    k = count_parameters(spec, kind, dataset.n_alts)
    result = FitResult(
        kind=kind,
        spec=spec,
        alt_names=dataset.alt_names,
        attribute_names=dataset.attribute_names,
        params=Parameters(T @ best.beta, best.thetas),
        final_ll=final_ll,
        validation_ll=valid_ll,
        n_parameters=k,
        aic=aic(k, final_ll),
        std_err=se,
        robust_std_err=rse,
        validation_accuracy=1.0 - valid_err,
        n_train=train_ds.n_obs,
        n_valid=valid_ds.n_obs,
        best_iteration=best_epoch,
        iterations_run=epochs,
        stop_reason=reason,
        standardizer=std,
    )
    return result, curve
