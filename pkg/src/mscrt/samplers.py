"""Exchangeable copies of the tested columns ``X_T``.

Two families are provided:

* :func:`mvn_crt_copies` draws copies for jointly normal covariates by
  rotating the part of ``X_T`` that is orthogonal to ``X_S``. Every copy
  reproduces ``X_T^T X_S`` and ``X_T^T X_T``.
* :func:`hub_sweep_copies` runs a forward sweep of local updates to reach a
  hub, then branches each copy off the hub with reverse sweeps. Local
  updates are residual rotation (Gaussian graphical models) or stratified
  permutation (discrete graphical models).

Samplers only ever see ``X``; the response never enters this module.
"""

from __future__ import annotations

import enum
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import rng as rngmod
from .errors import (
    ConfigurationError,
    DataTypeError,
    DegenerateResidualError,
    InvalidDimensionError,
    InvalidOrderError,
)
from .graph import Graph
from .linalg import (
    RANK_RTOL,
    Array,
    _as_array,
    haar_from_gaussian,
    psd_sqrt,
    residual_projector,
)

MAX_RESAMPLE = 10


class LocalUpdateKind(str, enum.Enum):
    GAUSSIAN = "gaussian-residual-rotation"
    DISCRETE = "discrete-stratified-permutation"


@dataclass
class CopySet:
    """Copies of ``X_T``; columns outside ``T`` are never stored.

    Attributes
    ----------
    copies : list of ndarray, each ``(n, |T|)``
    tested_indices : tuple of int
        Column positions of ``T`` in ``X``, in the order of the copy columns.
    hub : ndarray or None
        Full ``n x p`` hub matrix for graph samplers.
    diagnostics : dict
    """

    copies: list[Array]
    tested_indices: tuple[int, ...]
    hub: Array | None = None
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.copies)

    def full(self, m: int, X) -> Array:
        """Copy ``m`` spliced into a copy of the full matrix ``X``."""
        out = np.array(_as_array(X), dtype=float, copy=True)
        out[:, list(self.tested_indices)] = self.copies[m]
        return out


def _seed_from(rng) -> int:
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(rngmod.as_generator(rng).integers(0, 2**63 - 1))


def _map(fn, items, n_jobs: int):
    if n_jobs is None or n_jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def _check_partition(p: int, T: Sequence[int], S: Sequence[int]) -> None:
    Ts, Ss = set(T), set(S)
    if len(Ts) != len(T) or len(Ss) != len(S):
        raise ConfigurationError("duplicate index in tested or conditioning set")
    if Ts & Ss:
        raise ConfigurationError(f"tested and conditioning sets overlap at {sorted(Ts & Ss)}")
    if Ts | Ss != set(range(p)):
        missing = sorted(set(range(p)) - (Ts | Ss))
        raise ConfigurationError(f"tested and conditioning sets must cover all columns; missing {missing}")


def mvn_crt_copies(
    X,
    T: Sequence[int],
    S: Sequence[int] | None = None,
    M: int = 100,
    augment_intercept: bool = True,
    rng=None,
    n_jobs: int = 1,
) -> CopySet:
    """Exact copies of ``X_T`` for multivariate normal covariates.

    Each copy is ``H X_T + P_R^T U Q`` where ``H`` projects onto the span of
    ``X_S`` (plus a ones column when ``augment_intercept``), ``P_R`` spans
    the complement, ``U`` is a Haar-distributed frame and ``Q`` is either
    ``(X_T^T P_R^T P_R X_T)^{1/2}`` (when ``n - s > t``) or ``P_R X_T``.

    Parameters
    ----------
    X : array_like, shape (n, p)
    T, S : sequences of int
        Tested and conditioning columns; ``S`` defaults to the complement.
    M : int
        Number of copies. ``M = 0`` returns an empty set.
    augment_intercept : bool
        Append a ones column to ``X_S`` (unknown covariate mean).
    rng : int or Generator
        Master seed; copy ``m`` uses its own substream.
    """
    X = _as_array(X)
    n, p = X.shape
    T = [int(j) for j in T]
    S = [j for j in range(p) if j not in set(T)] if S is None else [int(j) for j in S]
    _check_partition(p, T, S)
    if M < 0:
        raise ConfigurationError("M must be non-negative")
    XS = X[:, S]
    if augment_intercept:
        XS = np.hstack([np.ones((n, 1)), XS])
    s = XS.shape[1]
    if n <= s:
        raise InvalidDimensionError(f"insufficient sample: need n > s, got n={n}, s={s}")
    if M == 0:
        return CopySet([], tuple(T))
    seed = _seed_from(rng)
    proj = residual_projector(XS)
    XT = X[:, T]
    PX = proj.basis @ XT
    fitted = XT - proj.basis.T @ PX
    k, t = PX.shape
    if k > t:
        Q = psd_sqrt(PX.T @ PX)
        r = t
    else:
        Q = PX
        r = k

    def draw(m):
        return rngmod.substream(seed, rngmod.SAMPLER, 1, m).standard_normal((k, r))

    G = np.stack(_map(draw, range(M), n_jobs))
    U = haar_from_gaussian(G)
    copies = fitted[None] + proj.basis.T[None] @ (U @ Q)
    # columns inside span(X_S) are determined; return them bit-exact
    pinned = np.linalg.norm(PX, axis=0) <= RANK_RTOL * np.maximum(np.linalg.norm(XT, axis=0), 1e-300)
    if pinned.any():
        copies[:, :, pinned] = XT[:, pinned]
    return CopySet(
        [np.ascontiguousarray(c) for c in copies],
        tuple(T),
        diagnostics={"sampler": "mvn", "complement_dim": k},
    )


def _design_basis(D: Array) -> Array:
    """Orthonormal basis of ``span(D)``, tolerating dependent columns."""
    Q, R = np.linalg.qr(D)
    d = np.abs(np.diag(R))
    if d.size and d.min() > RANK_RTOL * max(d.max(), 1e-300) * 10:
        return Q
    U, sv, _ = np.linalg.svd(D, full_matrices=False)
    keep = sv > RANK_RTOL * sv[0] if sv.size else np.zeros(0, bool)
    return U[:, keep]


def _rotate(x: Array, basis: Array, rng: np.random.Generator) -> Array:
    fitted = basis @ (basis.T @ x)
    resid = x - fitted
    rnorm = np.linalg.norm(resid)
    for _ in range(MAX_RESAMPLE):
        e = rng.standard_normal(x.shape[0])
        e_res = e - basis @ (basis.T @ e)
        enorm = np.linalg.norm(e_res)
        if enorm > 0:
            return fitted + e_res * (rnorm / enorm)
    raise DegenerateResidualError(
        f"random residual vanished in {MAX_RESAMPLE} attempts"
    )


def residual_rotation_update(X, i: int, neighbors: Sequence[int], rng) -> Array:
    """Resample column ``i`` given its neighbours by residual rotation.

    The column is split into its least-squares fit on ``[1, X_N]`` and a
    residual; the residual is replaced by a random vector in the same
    orthogonal complement with the same norm. The fit ``[1, X_N]^T x`` and
    ``||x||`` are preserved. When ``n <= |N| + 1`` the column is returned
    unchanged.
    """
    X = _as_array(X)
    rng = rngmod.as_generator(rng)
    n = X.shape[0]
    x = X[:, i]
    nbrs = list(neighbors)
    if n <= len(nbrs) + 1:
        return x.copy()
    D = np.empty((n, len(nbrs) + 1))
    D[:, 0] = 1.0
    D[:, 1:] = X[:, nbrs]
    return _rotate(x, _design_basis(D), rng)


def _is_integer_coded(a: Array) -> bool:
    return bool(np.all(np.isfinite(a)) and np.all(a == np.round(a)))


def discrete_permutation_update(X, i: int, neighbors: Sequence[int], rng) -> Array:
    """Permute column ``i`` within strata of identical neighbour configuration.

    Rows sharing the exact tuple of neighbour values form a stratum; the
    entries of column ``i`` are shuffled uniformly inside each stratum, so
    every per-stratum value count is preserved.
    """
    return _discrete_update(_as_array(X), i, list(neighbors), rngmod.as_generator(rng))[0]


def _discrete_update(X: Array, i: int, nbrs: list[int], rng) -> tuple[Array, int, int]:
    cols = [i] + nbrs
    if not _is_integer_coded(X[:, cols]):
        raise DataTypeError(f"discrete update needs integer-coded columns {cols}")
    x = X[:, i]
    n = x.shape[0]
    if nbrs:
        _, strata = np.unique(X[:, nbrs], axis=0, return_inverse=True)
        strata = strata.ravel()
    else:
        strata = np.zeros(n, dtype=np.intp)
    counts = np.bincount(strata)
    rows = np.arange(n)
    by_index = np.lexsort((rows, strata))
    by_random = np.lexsort((rng.random(n), strata))
    out = np.empty_like(x)
    out[by_index] = x[by_random]
    return out, int(np.sum(counts == 1)), int(counts.size)



@njit(cache=True)
def _project_out(Q, k, v):
    """``v`` minus its projection on rows ``Q[:k]`` (two Gram-Schmidt passes)."""
    n = v.shape[0]
    r = v.copy()
    for _ in range(2):
        for l in range(k):
            c = 0.0
            for t in range(n):
                c += Q[l, t] * r[t]
            for t in range(n):
                r[t] -= c * Q[l, t]
    return r


@njit(cache=True)
def _gaussian_sweeps(W, order, ptr, nbrs, noise, L, rtol):
    """``L`` residual-rotation sweeps over ``order`` applied to ``W`` in place.

    The basis of ``[1, W_N]`` is built row-wise by modified Gram-Schmidt
    applied twice; columns whose remaining norm drops below ``rtol`` of the
    original are skipped as dependent. ``noise[u]`` is the Gaussian draw
    for the ``u``-th update. Returns the number of identity updates, or -1
    if a random residual vanished.
    """
    n = W.shape[0]
    identity = 0
    u = 0
    maxd = 0
    for a in range(order.shape[0]):
        maxd = max(maxd, ptr[a + 1] - ptr[a])
    Q = np.empty((maxd + 1, n))
    v = np.empty(n)
    for _ in range(L):
        for a in range(order.shape[0]):
            i = order[a]
            d = ptr[a + 1] - ptr[a]
            if n <= d + 1:
                identity += 1
                u += 1
                continue
            for t in range(n):
                Q[0, t] = 1.0 / np.sqrt(n)
            k = 1
            for b in range(d):
                col = nbrs[ptr[a] + b]
                v0 = 0.0
                for t in range(n):
                    v[t] = W[t, col]
                    v0 += v[t] * v[t]
                r = _project_out(Q, k, v)
                nr = np.sqrt(np.sum(r * r))
                if v0 > 0.0 and nr > rtol * np.sqrt(v0):
                    for t in range(n):
                        Q[k, t] = r[t] / nr
                    k += 1
            x = W[:, i].copy()
            resid = _project_out(Q, k, x)
            e_res = _project_out(Q, k, noise[u])
            u += 1
            enorm = np.sqrt(np.sum(e_res * e_res))
            if enorm == 0.0:
                return -1
            scale = np.sqrt(np.sum(resid * resid)) / enorm
            for t in range(n):
                W[t, i] = x[t] - resid[t] + e_res[t] * scale
    return identity


def _neighbor_csr(order, graph: Graph):
    ptr = np.zeros(len(order) + 1, dtype=np.int64)
    flat = []
    for a, i in enumerate(order):
        nb = graph.neighbors(i)
        flat.extend(nb)
        ptr[a + 1] = ptr[a] + len(nb)
    return np.asarray(order, dtype=np.int64), ptr, np.asarray(flat, dtype=np.int64)


def _run_gaussian(W: Array, order, graph: Graph, L: int, rng, stats: dict) -> None:
    o, ptr, nb = _neighbor_csr(order, graph)
    noise = rng.standard_normal((L * len(order), W.shape[0]))
    ident = _gaussian_sweeps(W, o, ptr, nb, noise, L, RANK_RTOL)
    if ident < 0:
        raise DegenerateResidualError("random residual vanished during a sweep")
    stats["identity_updates"] += ident
    stats["updates"] += L * len(order) - ident


def _sweep(W: Array, order, graph: Graph, kind: LocalUpdateKind, rng, stats: dict) -> None:
    n = W.shape[0]
    for i in order:
        nbrs = list(graph.neighbors(i))
        if kind is LocalUpdateKind.GAUSSIAN:
            if n <= len(nbrs) + 1:
                stats["identity_updates"] += 1
                continue
            D = np.empty((n, len(nbrs) + 1))
            D[:, 0] = 1.0
            D[:, 1:] = W[:, nbrs]
            W[:, i] = _rotate(W[:, i], _design_basis(D), rng)
        else:
            W[:, i], singles, total = _discrete_update(W, i, nbrs, rng)
            stats["singleton_strata"] += singles
            stats["strata"] += total
        stats["updates"] += 1


def hub_sweep_copies(
    X,
    graph: Graph,
    T_order: Sequence[int],
    M: int = 100,
    L: int = 1,
    kind: LocalUpdateKind | str = LocalUpdateKind.GAUSSIAN,
    rng=None,
    n_jobs: int = 1,
) -> CopySet:
    """Copies of ``X_T`` for graphical models via hub and reverse sweeps.

    ``L`` forward sweeps over ``T_order`` turn ``X`` into the hub; each copy
    then starts from the hub and applies ``L`` sweeps in reversed order.
    Copy ``m`` draws from its own substream of the master seed, so the
    result does not depend on ``n_jobs``.
    """
    X = _as_array(X)
    _n, p = X.shape
    kind = LocalUpdateKind(kind)
    order = [int(i) for i in T_order]
    if len(set(order)) != len(order):
        dup = sorted({i for i in order if order.count(i) > 1})
        raise InvalidOrderError(f"duplicate index in update order: {dup}")
    if graph.node_count != p:
        raise ConfigurationError(f"graph has {graph.node_count} nodes but X has {p} columns")
    if any(not 0 <= i < p for i in order):
        raise ConfigurationError("update order contains an out-of-range column")
    if L < 1:
        raise ConfigurationError("need at least one sweep (L >= 1)")
    if M < 0:
        raise ConfigurationError("M must be non-negative")
    if kind is LocalUpdateKind.DISCRETE:
        needed = sorted(set(order).union(*(graph.neighbors(i) for i in order)))
        if not _is_integer_coded(X[:, needed]):
            raise DataTypeError("graph-discrete sampler needs integer-coded tested and neighbour columns")
    seed = _seed_from(rng)

    def fresh_stats():
        return {"updates": 0, "identity_updates": 0, "singleton_strata": 0, "strata": 0}

    hub = X.copy()
    hub_stats = fresh_stats()
    hub_rng = rngmod.substream(seed, rngmod.SAMPLER, 0)
    if kind is LocalUpdateKind.GAUSSIAN:
        _run_gaussian(hub, order, graph, L, hub_rng, hub_stats)
    else:
        for _ in range(L):
            _sweep(hub, order, graph, kind, hub_rng, hub_stats)
    reverse = order[::-1]

    def one_copy(m):
        W = hub.copy()
        st = fresh_stats()
        r = rngmod.substream(seed, rngmod.SAMPLER, 1, m)
        if kind is LocalUpdateKind.GAUSSIAN:
            _run_gaussian(W, reverse, graph, L, r, st)
        else:
            for _ in range(L):
                _sweep(W, reverse, graph, kind, r, st)
        return np.ascontiguousarray(W[:, order]), st

    results = _map(one_copy, range(M), n_jobs)
    diag = {"sampler": f"graph-{'gaussian' if kind is LocalUpdateKind.GAUSSIAN else 'discrete'}", "L": L}
    totals = fresh_stats()
    for _, st in [(None, hub_stats)] + results:
        for k in totals:
            totals[k] += st[k]
    if kind is LocalUpdateKind.DISCRETE:
        diag["fixed_strata_fraction"] = (
            totals["singleton_strata"] / totals["strata"] if totals["strata"] else 1.0
        )
    else:
        diag["identity_update_fraction"] = (
            totals["identity_updates"] / (totals["updates"] + totals["identity_updates"])
            if (totals["updates"] + totals["identity_updates"])
            else 1.0
        )
    return CopySet([c for c, _ in results], tuple(order), hub=hub, diagnostics=diag)
