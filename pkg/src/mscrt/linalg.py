"""Dense linear-algebra kernels shared by the samplers and statistics.

All routines work on plain ``numpy`` arrays; :class:`DataMatrix` is a thin
labelled wrapper used at the I/O boundary.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidDimensionError, NotPSDError, RankDeficiencyError

RANK_RTOL = 1e-10
PSD_CLAMP = 1e-10

Array = NDArray[np.float64]


@dataclass(frozen=True)
class DataMatrix:
    """An ``n x p`` observation matrix with column labels."""

    values: Array
    col_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidDimensionError(f"expected a 2-d matrix, got shape {values.shape}")
        n, p = values.shape
        if n < 1 or p < 1:
            raise InvalidDimensionError(f"empty matrix of shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidDimensionError("matrix contains non-finite entries")
        names = tuple(self.col_names) or tuple(f"X{j + 1}" for j in range(p))
        if len(names) != p:
            raise InvalidDimensionError(f"{len(names)} column names for {p} columns")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "col_names", names)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def columns(self, idx: Sequence[int]) -> Array:
        return self.values[:, list(idx)]

    def index_of(self, name: str) -> int:
        return self.col_names.index(name)


@dataclass(frozen=True)
class ResidualProjector:
    """Orthonormal basis of the orthogonal complement of a column span.

    ``basis`` has shape ``(n - s, n)``; its rows are orthonormal and
    ``basis.T @ basis`` is the residual-maker ``I - H``.
    """

    basis: Array
    source_rank: int

    def apply(self, v: Array) -> Array:
        """Coordinates of ``v`` in the complement, i.e. ``basis @ v``."""
        return self.basis @ v

    def residualize(self, v: Array) -> Array:
        """``(I - H) v`` expressed back in ``R^n``."""
        return self.basis.T @ (self.basis @ v)


@dataclass(frozen=True)
class OrthonormalFrame:
    columns: Array


class LstsqResult(NamedTuple):
    coefficients: Array
    fitted: Array
    residual: Array


def _as_array(X) -> Array:
    if isinstance(X, DataMatrix):
        return X.values
    return np.asarray(X, dtype=float)


def dependent_columns(A: Array, rtol: float = RANK_RTOL) -> list[int]:
    """Columns of ``A`` that lie (numerically) in the span of earlier ones.

    Columns are scanned left to right; a column is dependent when the norm of
    its residual on the kept columns falls below ``rtol`` times the largest
    column norm (or is exactly zero).
    """
    A = _as_array(A)
    scale = np.max(np.linalg.norm(A, axis=0), initial=0.0)
    kept: list[Array] = []
    bad = []
    for j in range(A.shape[1]):
        v = A[:, j].astype(float, copy=True)
        for _ in range(2):
            for q in kept:
                v -= q * (q @ v)
        nv = np.linalg.norm(v)
        if nv <= rtol * scale or nv == 0.0:
            bad.append(j)
        else:
            kept.append(v / nv)
    return bad


def _check_rank(A: Array, R: Array) -> None:
    if R.shape[1] == 0:
        return
    sv = np.linalg.svd(R, compute_uv=False)
    if sv[-1] <= RANK_RTOL * sv[0]:
        bad = dependent_columns(A)
        raise RankDeficiencyError(
            f"design is rank deficient; dependent columns {bad}", columns=bad
        )


def sample_haar_frame(rng: np.random.Generator, n: int, d: int) -> OrthonormalFrame:
    """Draw an ``n x d`` frame from the Haar measure on the Stiefel manifold.

    A Gaussian matrix is orthonormalised by Householder QR; flipping column
    signs so that ``diag(R) > 0`` makes the result exactly Haar distributed.
    """
    if d < 1 or d > n:
        raise InvalidDimensionError(f"need 1 <= d <= n, got n={n}, d={d}")
    return OrthonormalFrame(haar_from_gaussian(rng.standard_normal((n, d))))


def haar_from_gaussian(G: Array) -> Array:
    """Sign-corrected Q factor of ``G``; works on stacks of matrices."""
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    return Q * signs[..., None, :]


def residual_projector(X_S) -> ResidualProjector:
    """Orthonormal rows spanning the complement of ``span(X_S)``.

    Parameters
    ----------
    X_S : array_like, shape (n, s)
        Full column rank conditioning design; ``s`` may be 0.

    Raises
    ------
    InvalidDimensionError
        If ``n <= s``.
    RankDeficiencyError
        If ``X_S`` has dependent columns.
    """
    X_S = _as_array(X_S)
    if X_S.ndim == 1:
        X_S = X_S[:, None]
    n, s = X_S.shape
    if n <= s:
        raise InvalidDimensionError(f"need n > s, got n={n}, s={s}")
    if s == 0:
        return ResidualProjector(np.eye(n), 0)
    Q, R = np.linalg.qr(X_S, mode="complete")
    _check_rank(X_S, R[:s])
    return ResidualProjector(np.ascontiguousarray(Q[:, s:].T), s)


def psd_sqrt(A) -> Array:
    """Symmetric square root of a positive semi-definite matrix.

    Eigenvalues down to ``-1e-10 * ||A||`` are treated as round-off and set
    to zero; anything more negative raises :class:`NotPSDError`.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidDimensionError(f"expected a square matrix, got {A.shape}")
    scale = np.max(np.abs(A), initial=0.0)
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-10 * max(scale, 1.0):
        raise NotPSDError("matrix is not symmetric")
    w, V = np.linalg.eigh((A + A.T) / 2)
    norm = np.max(np.abs(w), initial=0.0)
    if w.size and w[0] < -PSD_CLAMP * norm:
        raise NotPSDError(f"matrix has negative eigenvalue {w[0]:.3g}")
    w = np.clip(w, 0.0, None)
    B = (V * np.sqrt(w)) @ V.T
    return (B + B.T) / 2


def least_squares(design, response) -> LstsqResult:
    """Ordinary least squares through a thin QR factorisation.

    Returns
    -------
    LstsqResult
        ``(coefficients, fitted, residual)`` with ``residual = response - fitted``.
    """
    A = _as_array(design)
    y = np.asarray(response, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.shape[0] != y.shape[0]:
        raise InvalidDimensionError(
            f"design has {A.shape[0]} rows but response has {y.shape[0]}"
        )
    if A.shape[1] == 0:
        return LstsqResult(np.zeros(0), np.zeros_like(y), y.copy())
    if A.shape[1] > A.shape[0]:
        raise RankDeficiencyError(
            f"{A.shape[1]} columns exceed {A.shape[0]} rows",
            columns=list(range(A.shape[0], A.shape[1])),
        )
    Q, R = np.linalg.qr(A)
    _check_rank(A, R)
    qty = Q.T @ y
    coef = np.linalg.solve(R, qty) if R.shape[0] else qty
    fitted = Q @ qty
    return LstsqResult(coef, fitted, y - fitted)


def hat_matrix(X_S) -> Array:
    """``X (X^T X)^{-1} X^T`` via the normal equations."""
    X_S = _as_array(X_S)
    return X_S @ np.linalg.solve(X_S.T @ X_S, X_S.T)


def with_intercept(*blocks) -> Array:
    """Horizontally stack a column of ones with the given blocks."""
    arrays = [np.asarray(b, dtype=float) for b in blocks]
    arrays = [b[:, None] if b.ndim == 1 else b for b in arrays]
    n = arrays[0].shape[0]
    return np.hstack([np.ones((n, 1))] + arrays)
