"""Multinomial logit fitted to fractional mode shares."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalError, NumericalWarning, UsageError


@dataclass
class MNLModel:
    """Utilities ``V = beta[:, 0] + Z @ beta[:, 1:].T``; the reference row stays zero."""

    beta: np.ndarray
    reference_mode_index: int
    l2_lambda: float
    loss_history: list = field(default_factory=list)
    converged: bool = True
    grad_norm: float = 0.0

    def predict(self, Z) -> np.ndarray:
        return mnl_predict(self.beta, Z)


def softmax(V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    shifted = V - V.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def mnl_predict(beta, z) -> np.ndarray:
    """Mode probabilities for one row ``z`` or a matrix of rows."""
    beta = np.asarray(beta, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    Z = z.reshape(1, -1) if single else z
    V = beta[:, 0] + Z @ beta[:, 1:].T
    P = softmax(V)
    return P[0] if single else P


def _with_intercept(Z):
    Z = np.asarray(Z, dtype=np.float64)
    return np.hstack([np.ones((Z.shape[0], 1)), Z])


def mnl_loss(beta, Z, Y, l2_lambda) -> float:
    """Mean soft cross-entropy plus ridge on the non-constant coefficients."""
    Z1 = _with_intercept(Z)
    V = Z1 @ beta.T
    Vmax = V.max(axis=1, keepdims=True)
    logp = V - Vmax - np.log(np.exp(V - Vmax).sum(axis=1, keepdims=True))
    return float(-(Y * logp).sum() / len(Y) + l2_lambda * (beta[:, 1:] ** 2).sum())


def mnl_loss_grad(beta, Z, Y, l2_lambda, reference_mode_index=None):
    Z1 = _with_intercept(Z)
    P = softmax(Z1 @ beta.T)
    grad = (P - Y).T @ Z1 / len(Y)
    grad[:, 1:] += 2.0 * l2_lambda * beta[:, 1:]
    if reference_mode_index is not None:
        grad[reference_mode_index] = 0.0
    return mnl_loss(beta, Z, Y, l2_lambda), grad


def mnl_fit(Z, Y, l2_lambda: float = 1e-4, max_iters: int = 1000, tol: float = 1e-6,
            reference_mode_index: int | None = None) -> MNLModel:
    """Full-batch gradient descent with Armijo backtracking.

    Stops once the gradient max-norm drops below ``tol``; hitting ``max_iters``
    first emits a :class:`NumericalWarning` and returns the current model.
    """
    Z = np.asarray(Z, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n, m = Y.shape
    if m < 2:
        raise UsageError("MNL needs at least two modes")
    if Z.shape[0] != n:
        raise UsageError("design matrix and shares differ in row count")
    if l2_lambda < 0:
        raise UsageError("l2_lambda must be >= 0")
    ref = m - 1 if reference_mode_index is None else reference_mode_index
    beta = np.zeros((m, Z.shape[1] + 1))
    loss, grad = mnl_loss_grad(beta, Z, Y, l2_lambda, ref)
    history = [loss]
    step = 1.0
    converged = False
    for _ in range(max_iters):
        gmax = float(np.abs(grad).max())
        if gmax < tol:
            converged = True
            break
        gsq = float((grad * grad).sum())
        while True:
            trial = beta - step * grad
            trial_loss = mnl_loss(trial, Z, Y, l2_lambda)
            if trial_loss <= loss - 0.5 * step * gsq:
                break
            step *= 0.5
            if step < 1e-20:
                break
        if step < 1e-20:
            break
        beta = trial
        loss, grad = mnl_loss_grad(beta, Z, Y, l2_lambda, ref)
        if not np.isfinite(loss):
            raise NumericalError("MNL loss became non-finite")
        history.append(loss)
        step *= 2.0
    gmax = float(np.abs(grad).max())
    if gmax < tol:
        converged = True
    if not converged:
        warnings.warn(f"MNL did not converge: gradient max-norm {gmax:.3g} after {len(history) - 1} steps",
                      NumericalWarning, stacklevel=2)
    return MNLModel(beta, ref, l2_lambda, history, converged, gmax)
