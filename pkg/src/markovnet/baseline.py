"""Weighted L2 logistic regression, the linear reference model.

Features are standardised with weighted statistics before fitting, so rows
with zero weight have no influence on the model at all.  The intercept is
not penalised.  Fitting uses damped Newton steps with backtracking.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log1p

from .errors import DivergedError


@dataclass(frozen=True)
class BaselineModel:
    #: intercept first, then one coefficient per (standardised) feature
    coef: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    l2_lambda: float
    iterations: int


def _design(X, center, scale):
    Z = (np.asarray(X, dtype=np.float64) - center) / scale
    return np.column_stack([np.ones(Z.shape[0]), Z])


def logistic_loss(beta, X1, y, w, l2_lambda):
    """Weighted negative log-likelihood plus ``l2/2 * |beta[1:]|^2``; returns value, gradient, Hessian."""
    z = X1 @ beta
    # log(1 + e^z) computed stably
    softplus = np.where(z > 0, z + log1p(np.exp(-np.abs(z))), log1p(np.exp(-np.abs(z))))
    value = float(w @ (softplus - y * z)) + 0.5 * l2_lambda * float(beta[1:] @ beta[1:])
    p = expit(z)
    grad = X1.T @ (w * (p - y))
    grad[1:] += l2_lambda * beta[1:]
    hess = (X1 * (w * p * (1 - p))[:, None]).T @ X1
    hess[1:, 1:] += l2_lambda * np.eye(beta.size - 1)
    return value, grad, hess


def logistic_fit(X, y, weights=None, l2_lambda: float = 1.0, max_iters: int = 100,
                 grad_tol: float = 1e-8, standardize: bool = True) -> BaselineModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.ones(y.size) if weights is None else np.asarray(weights, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.size or w.shape != y.shape:
        raise ValueError("X must be (N, d) with one label and one weight per row")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be non-negative and not all zero")

    if standardize:
        wn = w / w.sum()
        center = wn @ X
        scale = np.sqrt(wn @ (X - center) ** 2)
        # the weighted mean of a constant column can miss it by an ulp
        live = X[w > 0]
        constant = np.all(live == live[0], axis=0)
        center = np.where(constant, live[0], center)
        scale = np.where(constant | (scale == 0), 1.0, scale)
    else:
        center, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
    X1 = _design(X, center, scale)

    beta = np.zeros(X1.shape[1])
    f, g, H = logistic_loss(beta, X1, y, w, l2_lambda)
    it = 0
    for it in range(1, max_iters + 1):
        if np.max(np.abs(g)) <= grad_tol:
            break
        try:
            step = np.linalg.solve(H + 1e-12 * np.eye(H.shape[0]), g)
        except np.linalg.LinAlgError:
            step = g
        t = 1.0
        accepted = False
        while t >= 1e-20:
            cand = beta - t * step
            f_c, g_c, H_c = logistic_loss(cand, X1, y, w, l2_lambda)
            if np.isfinite(f_c) and f_c <= f - 1e-4 * t * float(g @ step):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no decrease is representable: accept the point if it is stationary to rounding
            if np.max(np.abs(g)) <= max(grad_tol, 1e-9 * max(1.0, abs(f))):
                break
            raise DivergedError(it, "logistic fit line search failed")
        beta, f, g, H = cand, f_c, g_c, H_c
        if not (np.isfinite(f) and np.all(np.isfinite(beta))):
            raise DivergedError(it)
    if not np.all(np.isfinite(beta)):
        raise DivergedError(it)
    return BaselineModel(beta, center, scale, float(l2_lambda), it)


def logistic_predict(model: BaselineModel, X) -> np.ndarray:
    """``P(y = 1 | x)`` for each row."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        return np.zeros(0)
    return expit(_design(X, model.center, model.scale) @ model.coef)


def one_hot(instances, cardinalities) -> np.ndarray:
    """Indicator expansion of discretised features (all levels kept)."""
    inst = np.asarray(instances, dtype=np.intp)
    blocks = []
    for j, card in enumerate(cardinalities):
        block = np.zeros((inst.shape[0], card))
        block[np.arange(inst.shape[0]), inst[:, j]] = 1.0
        blocks.append(block)
    return np.hstack(blocks) if blocks else np.zeros((inst.shape[0], 0))
