"""Analytic log-likelihood gradients and a finite-difference oracle.

The reverse pass walks the forward trace backwards.  For a residual layer
h^(m) = h^(m-1) - softplus(theta h^(m-1)) the local Jacobian is
I - diag(sigmoid(theta h^(m-1))) theta, so the adjoint passes through the
identity term untouched, whatever the layer's own derivative is.  The MLP
layer h^(m) = sigmoid(W h^(m-1)) has no identity term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, DesignIndex, ModelKind, ModelTag, Parameters
from .model import (
    NonFiniteError,
    _mlp_states,
    _residual_states,
    log_likelihood,
    log_softmax,
    sigmoid,
)


@dataclass(frozen=True)
class Gradient:
    d_beta: np.ndarray
    d_thetas: tuple[np.ndarray, ...] = ()

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.d_beta] + [t.ravel() for t in self.d_thetas])


def _forward_states(params: Parameters, V: np.ndarray, kind: ModelKind):
    if kind.tag is ModelTag.RESLOGIT:
        h, pre, g = _residual_states(params.thetas, V)
        return V + g, h, pre
    if kind.tag is ModelTag.MLP:
        h, pre = _mlp_states(params.thetas, V)
        return h[-1], h, pre
    return V, [V], []


def _backward(params: Parameters, kind: ModelKind, h, pre, delta: np.ndarray, want_thetas: bool = True):
    """Propagate d(objective)/d(output utilities) back to V.

    Returns the adjoint of V and the per-layer matrix gradients.
    """
    d_thetas = [None] * len(pre)
    for m in range(len(pre) - 1, -1, -1):
        theta = params.thetas[m]
        s = sigmoid(pre[m])
        if kind.tag is ModelTag.RESLOGIT:
            t = s * delta
            if want_thetas:
                d_thetas[m] = -(t.T @ h[m])
            delta = delta - t @ theta
        else:
            t = delta * s * (1.0 - s)
            if want_thetas:
                d_thetas[m] = t.T @ h[m]
            delta = t @ theta
        if not np.all(np.isfinite(delta)):
            raise NonFiniteError(f"non-finite gradient at layer {m + 1}", layer=m + 1)
    return delta, d_thetas


def loglik_and_grad(params: Parameters, Z: np.ndarray, choices: np.ndarray, design: DesignIndex,
                    kind: ModelKind, per_obs: bool = False):
    """Batch log-likelihood and gradient from a precomputed regressor matrix.

    With ``per_obs`` the per-observation beta scores (N x k) are returned as
    a third element.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        V = Z @ design.coef_matrix(params.beta)
        U, h, pre = _forward_states(params, V, kind)
        logp = log_softmax(U)
        rows = np.arange(len(choices))
        ll = float(logp[rows, choices].sum())
    if not np.isfinite(ll):
        raise NonFiniteError("log-likelihood is not finite")
    delta = -np.exp(logp)
    delta[rows, choices] += 1.0
    dV, d_thetas = _backward(params, kind, h, pre, delta)
    d_beta = design.collapse(Z.T @ dV)
    grad = Gradient(d_beta, tuple(d_thetas))
    if per_obs:
        scores = design.collapse(Z[:, :, None] * dV[:, None, :])
        return ll, grad, scores
    return ll, grad


def grad_loglik(params: Parameters, batch: Dataset, design: DesignIndex, kind: ModelKind):
    """Exact (log-likelihood, gradient) for a batch of observations."""
    if batch.n_obs == 0:
        raise ValueError("empty batch")
    params.check(design, kind)
    return loglik_and_grad(params, design.regressors(batch.attributes), batch.choices, design, kind)


def mlp_grad(params: Parameters, batch: Dataset, design: DesignIndex) -> Gradient:
    """Chain-rule gradient of the MLP baseline's log-likelihood."""
    return grad_loglik(params, batch, design, ModelKind.mlp(params.depth))[1]


def beta_scores(params: Parameters, dataset: Dataset, design: DesignIndex, kind: ModelKind) -> np.ndarray:
    """Per-observation gradients of ln P(chosen) with respect to beta (N x k)."""
    params.check(design, kind)
    Z = design.regressors(dataset.attributes)
    return loglik_and_grad(params, Z, dataset.choices, design, kind, per_obs=True)[2]


def log_prob_jacobian(params: Parameters, V: np.ndarray, kind: ModelKind) -> np.ndarray:
    """d ln P_i / d V_j for every observation: an (N x J x J) array indexed [n, i, j]."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    U, h, pre = _forward_states(params, V, kind)
    P = np.exp(log_softmax(U))
    J = V.shape[1]
    out = np.empty((V.shape[0], J, J))
    for i in range(J):
        seed = -P.copy()
        seed[:, i] += 1.0
        out[:, i, :], _ = _backward(params, kind, h, pre, seed, want_thetas=False)
    return out


def _reference_loglik(flat: np.ndarray, shapes: Parameters, Z: np.ndarray, choices: np.ndarray,
                      design: DesignIndex, kind: ModelKind) -> np.longdouble:
    """Straight-line forward pass in extended precision, used only by the oracle."""
    k = shapes.beta.size
    coef = np.zeros((design.n_slots, design.n_alts), dtype=np.longdouble)
    coef[:, list(design.free_alts)] = flat[:k].reshape(design.n_slots, design.n_alts - 1)
    h = Z.astype(np.longdouble) @ coef
    pos = k
    for t in shapes.thetas:
        theta = flat[pos:pos + t.size].reshape(t.shape)
        pos += t.size
        a = h @ theta.T
        if kind.tag is ModelTag.RESLOGIT:
            h = h - np.logaddexp(np.longdouble(0), a)
        else:
            h = 1 / (1 + np.exp(-a))
    u = h - h.max(axis=1, keepdims=True)
    logp = u - np.log(np.exp(u).sum(axis=1, keepdims=True))
    return logp[np.arange(len(choices)), choices].sum()


def finite_diff_grad(params: Parameters, batch: Dataset, design: DesignIndex, kind: ModelKind,
                     step: float = 1e-5) -> Gradient:
    """Central differences of the batch log-likelihood on every coordinate.

    The likelihood is re-evaluated in ``np.longdouble`` by a separate
    forward pass, which keeps cancellation error well below the analytic
    gradient's own rounding on x86 (on platforms where longdouble is plain
    double the oracle is correspondingly noisier).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    params.check(design, kind)
    Z = design.regressors(batch.attributes)
    flat = params.flatten().astype(np.longdouble)
    h = np.longdouble(step)
    out = np.empty(flat.size)
    for i in range(flat.size):
        up = flat.copy()
        up[i] += h
        dn = flat.copy()
        dn[i] -= h
        diff = (_reference_loglik(up, params, Z, batch.choices, design, kind)
                - _reference_loglik(dn, params, Z, batch.choices, design, kind))
        out[i] = float(diff / (up[i] - dn[i]))
    shaped = params.unflatten(out)
    return Gradient(np.array(shaped.beta), tuple(np.array(t) for t in shaped.thetas))
