"""Unpenalised GLM fits for the deviance statistic."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, SeparationWarning
from ..linalg import Array, least_squares

MAX_IRLS = 50
IRLS_TOL = 1e-8
PROB_EPS = 1e-8


@dataclass(frozen=True)
class GlmFit:
    coefficients: Array
    deviance: float
    family: str
    converged: bool = True
    separated: bool = False
    iterations: int = 0


def _has_constant_column(X: Array) -> bool:
    return X.shape[1] > 0 and bool(np.any(np.all(X == X[:1], axis=0) & (X[0] != 0)))


def _design(X, intercept) -> Array:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if intercept == "auto":
        intercept = not _has_constant_column(X)
    if intercept:
        X = np.hstack([np.ones((X.shape[0], 1)), X])
    return X


def _binomial_deviance(y: Array, mu: Array) -> float:
    mu = np.clip(mu, 1e-300, 1 - 1e-16)
    ll = np.where(y == 1, np.log(mu), np.log1p(-mu))
    return float(-2.0 * ll.sum())


def fit_glm(X, y, family: str = "gaussian", intercept="auto") -> GlmFit:
    """Maximum-likelihood GLM fit.

    ``intercept="auto"`` prepends a ones column unless ``X`` already has a
    nonzero constant column. Gaussian fits use QR least squares; binomial
    fits use IRLS capped at 50 iterations with a relative deviance-change
    tolerance of 1e-8. Separable data end at the cap (or with fitted
    probabilities numerically 0/1) and are flagged, not raised.
    """
    D = _design(X, intercept)
    y = np.asarray(y, dtype=float)
    if family == "gaussian":
        coef, _, resid = least_squares(D, y)
        return GlmFit(coef, float(resid @ resid), family)
    if family != "binomial":
        raise DomainError(f"unknown family {family!r}")
    if not np.all((y == 0) | (y == 1)):
        raise DomainError("binomial family needs a 0/1 response")
    mu = (y + 0.5) / 2
    eta = np.log(mu / (1 - mu))
    dev = _binomial_deviance(y, mu)
    coef = np.zeros(D.shape[1])
    converged = False
    it = 0
    for it in range(1, MAX_IRLS + 1):
        w = np.maximum(mu * (1 - mu), 1e-12)
        z = eta + (y - mu) / w
        sw = np.sqrt(w)
        coef = least_squares(D * sw[:, None], z * sw).coefficients
        eta = D @ coef
        mu = np.exp(-np.logaddexp(0.0, -eta))
        new_dev = _binomial_deviance(y, mu)
        if abs(new_dev - dev) / (abs(new_dev) + 0.1) < IRLS_TOL:
            dev = new_dev
            converged = True
            break
        dev = new_dev
    separated = (not converged) or bool(np.any((mu < PROB_EPS) | (mu > 1 - PROB_EPS)))
    return GlmFit(coef, dev, family, converged, separated, it)


def glm_deviance(X, y, family: str = "gaussian", intercept="auto") -> float:
    """Deviance of the fitted GLM.

    For the gaussian family this is the residual sum of squares; for the
    binomial family it is ``-2`` times the maximised log-likelihood. A
    :class:`SeparationWarning` is emitted when the logistic fit separates.
    """
    fit = fit_glm(X, y, family, intercept)
    if fit.separated:
        warnings.warn("logistic fit separated; deviance taken at iteration cap",
                      SeparationWarning, stacklevel=2)
    return fit.deviance
