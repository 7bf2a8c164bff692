"""Joint test statistics for ``Y ⫫ X_T | X_S``.

Every statistic is oriented so that larger values are stronger evidence
against conditional independence. Deviance and residual sum of squares
shrink under the alternative, so ``LM-SSR`` and ``GLM-Dev`` return their
*negatives*.

Statistics come in four flavours:

direct
    Fit ``Y`` on ``[1, X_T, X_S]`` (``LM-SST``, ``LM-SSR``, ``GLM-Dev``,
    ``MaxCor``, ``RF``).
augmented
    Distil ``Y`` on ``X_S`` once, then apply a direct statistic to the
    predictors ``[Yhat0, X_T]`` (``GLM-L1-D``, ``RF-D``).
residualized
    Apply a direct statistic to the distilled residual ``Y - Yhat0`` and
    ``X_T`` (``GLM-L1-R-SST``, ``LM-L1-R-SSR``, ``RF-RR``).
projected
    Work with residuals after projecting out ``[1, X_S]`` (``T-dense``,
    ``T-sparse``).

The distillation (or projection) only depends on ``(Y, X_S)``; it is built
once per test and reused verbatim for the observed data and every copy.
"""

from __future__ import annotations

import warnings
from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import (
    DegenerateFitError,
    DegenerateInputError,
    DomainError,
    FeasibilityError,
    RankDeficiencyError,
    RankWarning,
)
from .linalg import RANK_RTOL, Array, dependent_columns, residual_projector
from .regressors import fit_forest, fit_glm, fit_lasso_cv, forest_importance
from .regressors.glm import SeparationWarning

DEFAULT_TREES = 500
DEFAULT_FOLDS = 10


def _col(a) -> Array:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _empty(n: int) -> Array:
    return np.zeros((n, 0))


def is_binary(y) -> bool:
    y = np.asarray(y)
    return bool(np.all((y == 0) | (y == 1)))


# ---------------------------------------------------------------- direct fits


@dataclass(frozen=True)
class _OlsFit:
    coef: Array
    resid: Array
    rinv_rownorm2: Array  # diag((D^T D)^{-1})
    tested_cols: Array  # positions of surviving X_T columns in the design
    df: int


def _ols(Y, X_T, X_S) -> _OlsFit:
    """OLS of ``Y`` on ``[1, X_S, X_T]`` dropping dependent columns.

    Columns are screened left to right, so an ``X_T`` column that is
    collinear with the intercept or ``X_S`` is the one dropped. Losing every
    tested column is an error.
    """
    Y = np.asarray(Y, dtype=float)
    X_T, X_S = _col(X_T), _col(X_S)
    n = Y.shape[0]
    s, t = X_S.shape[1], X_T.shape[1]
    D = np.empty((n, 1 + s + t))
    D[:, 0] = 1.0
    D[:, 1 : 1 + s] = X_S
    D[:, 1 + s :] = X_T
    tested = np.arange(1 + s, 1 + s + t)
    Q, R = np.linalg.qr(D) if D.shape[1] <= n else (None, None)
    ok = R is not None
    if ok:
        d = np.abs(np.diag(R))
        ok = d.min() > RANK_RTOL * d.max() * 10
    if not ok:
        bad = dependent_columns(D)
        if t and all(j in bad for j in tested):
            raise RankDeficiencyError(
                "every tested column is collinear with the intercept and conditioning set",
                columns=bad,
            )
        warnings.warn(f"dropping dependent design columns {bad}", RankWarning, stacklevel=3)
        keep = np.setdiff1d(np.arange(D.shape[1]), bad)
        tested = np.flatnonzero(np.isin(keep, tested))
        D = D[:, keep]
        if D.shape[1] > n:
            raise DegenerateFitError("more independent columns than rows")
        Q, R = np.linalg.qr(D)
    qty = Q.T @ Y
    coef = np.linalg.solve(R, qty)
    resid = Y - Q @ qty
    Rinv = np.linalg.solve(R, np.eye(R.shape[0]))
    return _OlsFit(coef, resid, np.sum(Rinv**2, axis=1), tested, n - D.shape[1])


def stat_lm_sst(Y, X_T, X_S=None) -> float:
    """Sum of squared t-statistics of the ``X_T`` coefficients."""
    Y = np.asarray(Y, dtype=float)
    X_S = _empty(len(Y)) if X_S is None else X_S
    fit = _ols(Y, X_T, X_S)
    if fit.df <= 0:
        raise DegenerateFitError("no residual degrees of freedom")
    sigma2 = float(fit.resid @ fit.resid) / fit.df
    if sigma2 <= (1e-13 * np.max(np.abs(Y))) ** 2:
        raise DegenerateFitError("residual variance is zero")
    c = fit.coef[fit.tested_cols]
    return float(np.sum(c**2 / (sigma2 * fit.rinv_rownorm2[fit.tested_cols])))


def stat_lm_ssr(Y, X_T, X_S=None) -> float:
    """Negative residual sum of squares of the full linear fit."""
    Y = np.asarray(Y, dtype=float)
    X_S = _empty(len(Y)) if X_S is None else X_S
    r = _ols(Y, X_T, X_S).resid
    return -float(r @ r)


def stat_glm_dev(Y, X_T, X_S=None, family: str = "gaussian") -> float:
    """Negative deviance of the GLM fit on ``[1, X_S, X_T]``."""
    Y = np.asarray(Y, dtype=float)
    X_S = _empty(len(Y)) if X_S is None else X_S
    if family == "gaussian":
        return stat_lm_ssr(Y, X_T, X_S)
    X_T, X_S = _col(X_T), _col(X_S)
    D = np.hstack([np.ones((len(Y), 1)), X_S, X_T])
    bad = dependent_columns(D)
    if bad:
        t_cols = set(range(1 + X_S.shape[1], D.shape[1]))
        if t_cols and t_cols <= set(bad):
            raise RankDeficiencyError("every tested column is collinear", columns=bad)
        warnings.warn(f"dropping dependent design columns {bad}", RankWarning, stacklevel=2)
        D = np.delete(D, bad, axis=1)
    fit = fit_glm(D, Y, family, intercept=False)
    if fit.separated:
        warnings.warn("logistic fit separated; deviance taken at iteration cap",
                      SeparationWarning, stacklevel=2)
    return -fit.deviance


def stat_maxcor(Y, X_T) -> float:
    """Largest absolute Pearson correlation between ``Y`` and a column of ``X_T``."""
    Y = np.asarray(Y, dtype=float)
    X_T = _col(X_T)
    yc = Y - Y.mean()
    xc = X_T - X_T.mean(axis=0)
    ny = np.linalg.norm(yc)
    nx = np.linalg.norm(xc, axis=0)
    if ny == 0 or np.any(nx == 0):
        raise DegenerateInputError("MaxCor needs non-constant response and columns")
    return float(np.max(np.abs(yc @ xc) / (ny * nx), initial=0.0))


def stat_rf(Y, X_T, X_S=None, task: str = "regression", rng=None,
            trees: int = DEFAULT_TREES) -> float:
    """Sum over ``T`` of out-of-bag permutation importances of a forest on ``[X_T, X_S]``."""
    Y = np.asarray(Y, dtype=float)
    X_T = _col(X_T)
    X_S = _empty(len(Y)) if X_S is None else _col(X_S)
    t = X_T.shape[1]
    if t == 0:
        return 0.0
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    Z = np.hstack([X_T, X_S])
    fit = fit_forest(Z, Y, task, trees, rng)
    return float(np.sum(forest_importance(fit, Z, Y, rng, features=np.arange(t))))


# ------------------------------------------------------------- distillation


@dataclass(frozen=True)
class DistillationContext:
    """Fit of ``Y`` on ``X_S`` alone.

    Attributes
    ----------
    fitted_null : ndarray
        ``Yhat0`` on the response scale.
    residual : ndarray
        ``Y - Yhat0``.
    predictor : ndarray
        The column used to augment ``X_T``: ``Yhat0``, or the linear
        predictor for the binomial lasso.
    distiller : str
    """

    fitted_null: Array
    residual: Array
    predictor: Array
    distiller: str


DISTILLERS = ("lasso-gaussian", "lasso-binomial", "forest-regression")


def _frozen(a) -> Array:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def make_distillation(Y, X_S, distiller: str, rng=None, folds: int = DEFAULT_FOLDS,
                      trees: int = DEFAULT_TREES) -> DistillationContext:
    """Distil the information ``X_S`` carries about ``Y``.

    The lasso distillers fit a cross-validated L1 model; the forest
    distiller treats ``Y`` as numeric and uses out-of-bag predictions, so
    the residual is not shrunk by in-sample overfitting.
    """
    if distiller not in DISTILLERS:
        raise DomainError(f"unknown distiller {distiller!r}")
    Y = np.asarray(Y, dtype=float)
    X_S = _col(X_S) if X_S is not None else _empty(len(Y))
    n = len(Y)
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if distiller == "lasso-binomial" and not is_binary(Y):
        raise DomainError("lasso-binomial distiller needs a 0/1 response")
    if X_S.shape[1] == 0:
        mean = float(Y.mean())
        fitted = np.full(n, mean)
        pred = fitted
        if distiller == "lasso-binomial":
            m = min(max(mean, 1e-12), 1 - 1e-12)
            pred = np.full(n, np.log(m / (1 - m)))
    elif distiller == "forest-regression":
        fit = fit_forest(X_S, Y, "regression", trees, rng)
        fitted = fit.oob_predict(X_S)
        missing = np.isnan(fitted)
        if missing.any():
            fitted[missing] = fit.predict(X_S[missing])
        pred = fitted
    else:
        family = "binomial" if distiller == "lasso-binomial" else "gaussian"
        fit = fit_lasso_cv(X_S, Y, family, min(folds, n), rng)
        fitted = fit.predict(X_S)
        pred = fit.linear_predictor(X_S) if family == "binomial" else fitted
    return DistillationContext(_frozen(fitted), _frozen(Y - fitted), _frozen(pred), distiller)


def stat_augmented(ctx: DistillationContext, Y, X_T, kind: str, rng=None,
                   family: str = "gaussian", trees: int = DEFAULT_TREES) -> float:
    """Direct statistic with predictors ``[Yhat0, X_T]`` (``GLM-L1-D`` or ``RF-D``)."""
    kind = canonical_kind(kind)
    aug = ctx.predictor[:, None]
    if kind == "GLM-L1-D":
        return stat_glm_dev(Y, X_T, aug, family)
    if kind == "RF-D":
        task = "classification" if family == "binomial" else "regression"
        return stat_rf(Y, X_T, aug, task, rng, trees)
    raise DomainError(f"{kind} is not an augmented statistic")


def stat_residualized(ctx: DistillationContext, X_T, kind: str, rng=None,
                      trees: int = DEFAULT_TREES) -> float:
    """Direct statistic on the distilled residual with ``S`` empty."""
    kind = canonical_kind(kind)
    r = ctx.residual
    if kind == "GLM-L1-R-SST":
        return stat_lm_sst(r, X_T)
    if kind == "LM-L1-R-SSR":
        return stat_lm_ssr(r, X_T)
    if kind == "RF-RR":
        return stat_rf(r, X_T, None, "regression", rng, trees)
    raise DomainError(f"{kind} is not a residualized statistic")


# ------------------------------------------------------- projected statistics


@dataclass(frozen=True)
class ProjectionContext:
    """``P_R`` for ``[1, X_S]`` together with ``P_R Y``."""

    basis: Array
    py: Array


def make_projection(Y, X_S, intercept: bool = True) -> ProjectionContext:
    Y = np.asarray(Y, dtype=float)
    X_S = _col(X_S) if X_S is not None else _empty(len(Y))
    if intercept:
        X_S = np.hstack([np.ones((len(Y), 1)), X_S])
    P = residual_projector(X_S)
    py = P.basis @ Y
    if np.linalg.norm(py) <= 1e-12 * max(np.linalg.norm(Y), 1e-300):
        raise DegenerateInputError("response lies in the span of the conditioning set")
    return ProjectionContext(P.basis, py)


def _projected(Y, X_T, X_S, intercept, ctx):
    if ctx is None:
        ctx = make_projection(Y, X_S, intercept)
    return ctx.py, ctx.basis @ _col(X_T)


def stat_t_dense(Y, X_T, X_S=None, intercept: bool = True,
                 ctx: ProjectionContext | None = None) -> float:
    """R^2 of the ``X_S``-residual of ``Y`` on the ``X_S``-residuals of ``X_T``."""
    py, px = _projected(Y, X_T, X_S, intercept, ctx)
    if px.shape[1] == 0:
        return 0.0
    if px.shape[1] > px.shape[0]:
        raise DegenerateInputError("more tested columns than residual dimensions")
    Q, R = np.linalg.qr(px)
    d = np.abs(np.diag(R))
    if d.min() <= RANK_RTOL * max(d.max(), 1e-300) * 10:
        raise DegenerateInputError("residualized tested columns are singular")
    proj = Q.T @ py
    return float((proj @ proj) / (py @ py))


def stat_t_sparse(Y, X_T, X_S=None, intercept: bool = True,
                  ctx: ProjectionContext | None = None) -> float:
    """Largest absolute correlation between the residual of ``Y`` and of each ``X_j``."""
    py, px = _projected(Y, X_T, X_S, intercept, ctx)
    if px.shape[1] == 0:
        return 0.0
    nx = np.linalg.norm(px, axis=0)
    if np.any(nx <= 1e-12 * max(np.max(nx), 1e-300)) or np.any(nx == 0):
        raise DegenerateInputError("a tested column lies in the span of the conditioning set")
    return float(np.max(np.abs(py @ px) / (np.linalg.norm(py) * nx)))


# ------------------------------------------------------------------ registry


@dataclass(frozen=True)
class StatisticKind:
    """Catalogue entry.

    ``response`` is ``"numeric"`` (any real response, binary treated as
    numeric) or ``"any"`` (family-aware: binary responses switch to the
    binomial / classification variant). ``extra_rows`` is the slack the
    statistic needs beyond ``|T| + |S|`` (direct kinds) or ``|T|``
    (distilled kinds) for ``n``.
    """

    name: str
    approach: str
    response: str
    distiller: str | None = None

    def min_rows(self, t: int, s: int) -> int:
        """Smallest feasible ``n``."""
        if self.name in ("LM-SST", "LM-SSR", "GLM-Dev"):
            return t + s + 2
        if self.name == "T-dense":
            return t + s + 2
        if self.name == "T-sparse":
            return s + 2
        if self.name == "GLM-L1-D":
            return t + 3
        if self.name in ("GLM-L1-R-SST", "LM-L1-R-SSR"):
            return t + 2
        return 3


KINDS: dict[str, StatisticKind] = {
    k.name: k
    for k in [
        StatisticKind("LM-SST", "direct", "numeric"),
        StatisticKind("LM-SSR", "direct", "numeric"),
        StatisticKind("GLM-Dev", "direct", "any"),
        StatisticKind("MaxCor", "direct", "numeric"),
        StatisticKind("RF", "direct", "any"),
        StatisticKind("GLM-L1-D", "augmented", "any", "lasso"),
        StatisticKind("RF-D", "augmented", "any", "forest-regression"),
        StatisticKind("GLM-L1-R-SST", "residualized", "any", "lasso"),
        StatisticKind("LM-L1-R-SSR", "residualized", "numeric", "lasso-gaussian"),
        StatisticKind("RF-RR", "residualized", "numeric", "forest-regression"),
        StatisticKind("T-dense", "projected", "numeric"),
        StatisticKind("T-sparse", "projected", "numeric"),
    ]
}

_BY_LOWER = {k.lower(): k for k in KINDS}


def canonical_kind(name: str) -> str:
    """Case-insensitive lookup of a statistic name."""
    try:
        return _BY_LOWER[str(name).lower()]
    except KeyError:
        raise DomainError(
            f"unknown statistic {name!r}; choose from {', '.join(KINDS)}"
        ) from None


def resolve_family(Y, family: str | None = None) -> str:
    if family in (None, "auto"):
        return "binomial" if is_binary(Y) else "gaussian"
    if family not in ("gaussian", "binomial"):
        raise DomainError(f"unknown family {family!r}")
    if family == "binomial" and not is_binary(Y):
        raise DomainError("binomial family needs a 0/1 response")
    return family


def check_feasible(kind: str, n: int, t: int, s: int) -> None:
    k = KINDS[canonical_kind(kind)]
    need = k.min_rows(t, s)
    if n < need:
        raise FeasibilityError(
            f"statistic {k.name} needs n >= {need} for |T|={t}, |S|={s}; got n={n}"
        )


@dataclass(frozen=True)
class PreparedStatistic:
    """A statistic bound to one test: ``evaluate(X_T, rng)`` for any copy."""

    kind: str
    context: Any
    evaluate: Callable[[Array, np.random.Generator], float]


def prepare(kind: str, Y, X_S, rng=None, family: str | None = None,
            trees: int = DEFAULT_TREES, folds: int = DEFAULT_FOLDS,
            intercept: bool = True) -> PreparedStatistic:
    """Bind ``kind`` to ``(Y, X_S)``, building any distillation once.

    The returned callable only takes the tested block, so the observed data
    and every copy go through exactly the same function.
    """
    name = canonical_kind(kind)
    info = KINDS[name]
    Y = np.asarray(Y, dtype=float)
    X_S = _col(X_S) if X_S is not None else _empty(len(Y))
    fam = resolve_family(Y, family)
    task = "classification" if fam == "binomial" else "regression"
    if name == "LM-SST":
        return PreparedStatistic(name, None, lambda XT, r: stat_lm_sst(Y, XT, X_S))
    if name == "LM-SSR":
        return PreparedStatistic(name, None, lambda XT, r: stat_lm_ssr(Y, XT, X_S))
    if name == "GLM-Dev":
        return PreparedStatistic(name, None, lambda XT, r: stat_glm_dev(Y, XT, X_S, fam))
    if name == "MaxCor":
        return PreparedStatistic(name, None, lambda XT, r: stat_maxcor(Y, XT))
    if name == "RF":
        return PreparedStatistic(name, None, lambda XT, r: stat_rf(Y, XT, X_S, task, r, trees))
    if name in ("T-dense", "T-sparse"):
        ctx = make_projection(Y, X_S, intercept)
        f = stat_t_dense if name == "T-dense" else stat_t_sparse
        return PreparedStatistic(name, ctx, lambda XT, r: f(Y, XT, ctx=ctx))
    distiller = info.distiller
    if distiller == "lasso":
        distiller = "lasso-binomial" if fam == "binomial" else "lasso-gaussian"
    ctx = make_distillation(Y, X_S, distiller, rng, folds, trees)
    if info.approach == "augmented":
        return PreparedStatistic(
            name, ctx, lambda XT, r: stat_augmented(ctx, Y, XT, name, r, fam, trees)
        )
    return PreparedStatistic(name, ctx, lambda XT, r: stat_residualized(ctx, XT, name, r, trees))
