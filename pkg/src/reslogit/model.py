"""Forward pass: utilities, residual logsum layers, probabilities, likelihood.

All batched functions take utilities as an (N x J) array, one row per
observation.  A single J-vector is accepted wherever a batch is, and the
result then drops the batch axis again.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Dataset, DesignIndex, ModelKind, ModelTag, Parameters


class NonFiniteError(FloatingPointError):
    """A forward or backward quantity overflowed; ``layer`` says where."""

    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


def softplus(z):
    """ln(1 + exp(z)) without overflow.

    Uses z + log1p(exp(-z)) for positive z and log1p(exp(z)) otherwise, so
    exp never sees a positive argument.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("softplus input must be finite")
    out = np.where(z > 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(np.minimum(z, 0.0))))
    return out if out.ndim else float(out)


def sigmoid(z):
    """Logistic function via exp(z - softplus(z))."""
    z = np.asarray(z, dtype=float)
    out = np.exp(z - softplus(z))
    return out if np.ndim(out) else float(out)


def log_softmax(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    shift = u.max(axis=-1, keepdims=True)
    # overflow here surfaces as -inf log-probabilities, reported by callers
    with np.errstate(over="ignore", invalid="ignore"):
        z = u - shift
        return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(u: np.ndarray) -> np.ndarray:
    z = np.asarray(u, dtype=float)
    z = np.exp(z - z.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def _as_batch(v) -> tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=float)
    return (v[None, :], True) if v.ndim == 1 else (v, False)


def linear_utility(params: Parameters, x, design: DesignIndex) -> np.ndarray:
    """V_j = ASC_j + sum_k beta_kj x_k, zero for the reference alternative.

    ``x`` holds full dataset attribute rows (length K, or N x K).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if params.beta.size != design.n_beta:
        raise ValueError(f"beta has length {params.beta.size}, layout needs {design.n_beta}")
    if x.shape[-1] <= max(design.columns, default=-1):
        raise ValueError(f"attribute vector of length {x.shape[-1]} is too short for this design")
    V = design.regressors(x) @ design.coef_matrix(params.beta)
    return V[0] if single else V


@dataclass(frozen=True)
class ForwardTrace:
    """Intermediate states of the residual recursion.

    ``h[0]`` is V and ``h[m]`` the state after layer m; ``pre[m]`` is the
    layer-(m+1) pre-activation theta^(m+1) h^(m).
    """

    V: np.ndarray
    h: tuple[np.ndarray, ...]
    pre: tuple[np.ndarray, ...]
    g: np.ndarray
    probs: np.ndarray

    @property
    def utilities(self) -> np.ndarray:
        return self.V + self.g


def _residual_states(thetas: Sequence[np.ndarray], V: np.ndarray):
    h = [V]
    pre = []
    g = np.zeros_like(V)
    for m, theta in enumerate(thetas):
        with np.errstate(over="ignore", invalid="ignore"):
            a = h[-1] @ theta.T
        if not np.all(np.isfinite(a)):
            raise NonFiniteError(f"non-finite pre-activation in residual layer {m + 1}", layer=m + 1)
        s = softplus(a)
        pre.append(a)
        h.append(h[-1] - s)
        g = g - s
    return h, pre, g


def residual_forward(thetas: Sequence[np.ndarray], V) -> ForwardTrace:
    """Run h^(m) = h^(m-1) - softplus(theta^(m) h^(m-1)) from h^(0) = V."""
    Vb, single = _as_batch(V)
    J = Vb.shape[1]
    thetas = [np.asarray(t, dtype=float) for t in thetas]
    for m, t in enumerate(thetas):
        if t.shape != (J, J):
            raise ValueError(f"layer {m + 1} matrix has shape {t.shape}, expected {(J, J)}")
    if not np.all(np.isfinite(Vb)):
        raise ValueError("utilities must be finite")
    h, pre, g = _residual_states(thetas, Vb)
    probs = softmax(Vb + g)
    if single:
        return ForwardTrace(Vb[0], tuple(x[0] for x in h), tuple(a[0] for a in pre), g[0], probs[0])
    return ForwardTrace(Vb, tuple(h), tuple(pre), g, probs)


def choice_probabilities(V, g) -> np.ndarray:
    """softmax(V + g), max-shifted."""
    u = np.asarray(V, dtype=float) + np.asarray(g, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("utilities must be finite")
    return softmax(u)


def q_form_probabilities(V, thetas: Sequence[np.ndarray], trace: ForwardTrace) -> np.ndarray:
    """Probabilities from the product-of-Q form.

    Q^(m) = 1 / (1 + exp(theta^(m) h^(m-1))), P_i proportional to
    prod_m Q_i^(m) exp(V_i).  The logs of the Q factors come from numpy's
    logaddexp rather than this module's softplus, so the two routes share
    only the hidden states.
    """
    Vb, single = _as_batch(V)
    states = [np.atleast_2d(h) for h in trace.h]
    log_num = Vb.copy()
    for m, theta in enumerate(thetas):
        a = states[m] @ np.asarray(theta, dtype=float).T
        log_num -= np.logaddexp(0.0, a)
    log_num -= log_num.max(axis=1, keepdims=True)
    num = np.exp(log_num)
    p = num / num.sum(axis=1, keepdims=True)
    return p[0] if single else p


def _mlp_states(weights: Sequence[np.ndarray], V: np.ndarray):
    h = [V]
    pre = []
    for m, w in enumerate(weights):
        with np.errstate(over="ignore", invalid="ignore"):
            a = h[-1] @ w.T
        if not np.all(np.isfinite(a)):
            raise NonFiniteError(f"non-finite pre-activation in MLP layer {m + 1}", layer=m + 1)
        pre.append(a)
        h.append(sigmoid(a))
    return h, pre


def mlp_forward(weights: Sequence[np.ndarray], V) -> np.ndarray:
    """softmax(h^(M)) with h^(m) = sigmoid(W^(m) h^(m-1)); no skip paths."""
    Vb, single = _as_batch(V)
    J = Vb.shape[1]
    weights = [np.asarray(w, dtype=float) for w in weights]
    for m, w in enumerate(weights):
        if w.shape != (J, J):
            raise ValueError(f"layer {m + 1} weight has shape {w.shape}, expected {(J, J)}")
    h, _ = _mlp_states(weights, Vb)
    p = softmax(h[-1])
    return p[0] if single else p


def output_utilities(params: Parameters, V: np.ndarray, kind: ModelKind) -> np.ndarray:
    """The vector fed to the final softmax for each model family."""
    if kind.tag is ModelTag.MNL:
        return V
    if kind.tag is ModelTag.RESLOGIT:
        _, _, g = _residual_states(params.thetas, V)
        return V + g
    h, _ = _mlp_states(params.thetas, V)
    return h[-1]


def predict_log_proba(params: Parameters, dataset: Dataset, design: DesignIndex, kind: ModelKind) -> np.ndarray:
    params.check(design, kind)
    V = linear_utility(params, dataset.attributes, design)
    return log_softmax(output_utilities(params, V, kind))


def predict_proba(params: Parameters, dataset: Dataset, design: DesignIndex, kind: ModelKind) -> np.ndarray:
    return np.exp(predict_log_proba(params, dataset, design, kind))


def log_likelihood(params: Parameters, dataset: Dataset, design: DesignIndex, kind: ModelKind) -> float:
    """Sum over observations of ln P(chosen alternative)."""
    logp = predict_log_proba(params, dataset, design, kind)
    chosen = logp[np.arange(dataset.n_obs), dataset.choices]
    if not np.all(np.isfinite(chosen)):
        bad = int(np.flatnonzero(~np.isfinite(chosen))[0])
        raise NonFiniteError(f"chosen-alternative probability underflowed at observation {bad}")
    return float(chosen.sum())
