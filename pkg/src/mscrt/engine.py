"""One multivariate conditional randomization test, end to end."""

from __future__ import annotations

import json
import warnings
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import ConfigurationError, DomainError
from .graph import Graph
from .linalg import Array, DataMatrix
from .samplers import CopySet, LocalUpdateKind, _map, hub_sweep_copies, mvn_crt_copies
from .statistics import (
    DEFAULT_FOLDS,
    DEFAULT_TREES,
    canonical_kind,
    check_feasible,
    prepare,
    resolve_family,
)

SAMPLERS = ("mvn", "graph-gaussian", "graph-discrete")


@dataclass(frozen=True)
class CrtConfig:
    """Settings for :func:`run_crt`.

    ``tested`` and ``conditioning`` hold 0-based column positions. Leave
    ``conditioning`` as ``None`` to condition on every untested column; the
    graph samplers always do, since their local updates read all
    neighbours.
    """

    tested: tuple[int, ...]
    conditioning: tuple[int, ...] | None = None
    sampler: str = "mvn"
    graph: Graph | None = None
    statistic: str = "LM-SST"
    M: int = 100
    L: int = 1
    seed: int = 0
    alpha: float = 0.05
    family: str = "auto"
    trees: int = DEFAULT_TREES
    folds: int = DEFAULT_FOLDS
    augment_intercept: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "tested", tuple(int(j) for j in self.tested))
        if self.conditioning is not None:
            object.__setattr__(self, "conditioning", tuple(int(j) for j in self.conditioning))
        object.__setattr__(self, "statistic", canonical_kind(self.statistic))
        if self.sampler not in SAMPLERS:
            raise DomainError(f"unknown sampler {self.sampler!r}; choose from {', '.join(SAMPLERS)}")
        if self.sampler != "mvn" and self.graph is None:
            raise ConfigurationError(f"sampler {self.sampler} needs a graph")
        if self.M < 1:
            raise ConfigurationError("M must be at least 1")
        if self.L < 1:
            raise ConfigurationError("L must be at least 1")
        if not 0 < self.alpha < 1:
            raise ConfigurationError("alpha must lie in (0, 1)")
        if not self.tested:
            raise ConfigurationError("tested set is empty")

    def resolve_sets(self, p: int) -> tuple[list[int], list[int]]:
        T = list(self.tested)
        if len(set(T)) != len(T):
            raise ConfigurationError("duplicate index in tested set")
        if any(not 0 <= j < p for j in T):
            raise ConfigurationError(f"tested index out of range for {p} columns")
        rest = [j for j in range(p) if j not in set(T)]
        if self.conditioning is None:
            return T, rest
        S = list(self.conditioning)
        if set(S) & set(T):
            raise ConfigurationError("tested and conditioning sets overlap")
        if any(not 0 <= j < p for j in S) or len(set(S)) != len(S):
            raise ConfigurationError("conditioning set has duplicate or out-of-range indices")
        if self.sampler != "mvn" and sorted(S) != rest:
            raise ConfigurationError("graph samplers condition on all untested columns")
        return T, S


@dataclass
class CrtResult:
    t0: float
    copy_stats: list[float]
    pvalue: float
    randomized_pvalue: float
    statistic: str
    sampler: str
    M: int
    L: int
    seed: int
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def rejects(self, alpha: float) -> bool:
        return self.pvalue <= alpha


def crt_pvalue(t0: float, copy_stats: Sequence[float]) -> float:
    """``(1 + #{m : T_m >= T_0}) / (M + 1)``."""
    stats = np.asarray(copy_stats, dtype=float)
    return float((1 + np.count_nonzero(stats >= t0)) / (stats.size + 1))


def randomized_pvalue(t0: float, copy_stats: Sequence[float], rng=None,
                      convention: str = "exact") -> float:
    """Tie-breaking p-value ``(A + B) / (M + 1)``.

    ``A`` counts copies strictly above ``t0``; ``B ~ U(0, S)`` with ``S`` one
    plus the number of exact ties. Under exchangeability this is
    ``Uniform(0, 1)``. ``convention="as-written"`` divides by ``M`` instead,
    which is uniform on ``(0, (M+1)/M)``.
    """
    stats = np.asarray(copy_stats, dtype=float)
    M = stats.size
    if M < 1:
        raise ConfigurationError("need at least one copy")
    A = np.count_nonzero(stats > t0)
    S = 1 + np.count_nonzero(stats == t0)
    B = rngmod.as_generator(rng).uniform(0.0, S)
    if convention == "exact":
        return float((A + B) / (M + 1))
    if convention == "as-written":
        return float((A + B) / M)
    raise DomainError(f"unknown convention {convention!r}")


def tie_count(t0: float, copy_stats: Sequence[float]) -> int:
    return int(np.count_nonzero(np.asarray(copy_stats, dtype=float) == t0))


def _matrix(X) -> Array:
    if isinstance(X, DataMatrix):
        return X.values
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ConfigurationError("X must be two-dimensional")
    return X


def sample_copies(X, cfg: CrtConfig) -> CopySet:
    """Copies of ``X_T`` for ``cfg``. Only ``X`` is consulted."""
    X = _matrix(X)
    T, S = cfg.resolve_sets(X.shape[1])
    seed = rngmod.derive_seed(cfg.seed, rngmod.SAMPLER)
    if cfg.sampler == "mvn":
        cols = T + S
        sub = X[:, cols]
        copies = mvn_crt_copies(sub, list(range(len(T))), list(range(len(T), len(cols))),
                                cfg.M, cfg.augment_intercept, seed, cfg.n_jobs)
        return CopySet(copies.copies, tuple(T), None, copies.diagnostics)
    kind = LocalUpdateKind.GAUSSIAN if cfg.sampler == "graph-gaussian" else LocalUpdateKind.DISCRETE
    if cfg.graph.node_count != X.shape[1]:
        raise ConfigurationError(
            f"graph has {cfg.graph.node_count} nodes but data have {X.shape[1]} columns"
        )
    return hub_sweep_copies(X, cfg.graph, T, cfg.M, cfg.L, kind, seed, cfg.n_jobs)


def run_crt(Y, X, cfg: CrtConfig) -> CrtResult:
    """Test ``Y ⫫ X_T | X_S`` with copies drawn conditionally on a sufficient statistic.

    The copies are drawn before ``Y`` is touched. Any distillation is then
    fitted once on ``(Y, X_S)`` and the same bound statistic is applied to
    the observed ``X_T`` and to every copy, each evaluation drawing from
    its own substream so results do not depend on ``cfg.n_jobs``.
    """
    X = _matrix(X)
    n, p = X.shape
    Y = np.asarray(Y, dtype=float).ravel()
    if Y.shape[0] != n:
        raise ConfigurationError(f"response has {Y.shape[0]} rows but X has {n}")
    if not np.all(np.isfinite(Y)):
        raise ConfigurationError("response contains non-finite values")
    T, S = cfg.resolve_sets(p)
    check_feasible(cfg.statistic, n, len(T), len(S))
    resolve_family(Y, cfg.family)

    notes: list[str] = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        copies = sample_copies(X, cfg)
        X_T, X_S = X[:, T], X[:, S]
        bound = prepare(cfg.statistic, Y, X_S, rngmod.substream(cfg.seed, rngmod.DISTILL),
                        cfg.family, cfg.trees, cfg.folds)
        t0 = bound.evaluate(X_T, rngmod.substream(cfg.seed, rngmod.STATISTIC, 0))
        stats = _map(
            lambda m: bound.evaluate(copies.copies[m],
                                     rngmod.substream(cfg.seed, rngmod.STATISTIC, 1, m)),
            range(cfg.M), cfg.n_jobs,
        )
    for w in caught:
        msg = f"{w.category.__name__}: {w.message}"
        if msg not in notes:
            notes.append(msg)
    if all(np.array_equal(c, X_T) for c in copies.copies):
        notes.append("degenerate-copies: every copy equals the observed tested block")
    ties = tie_count(t0, stats)
    if ties:
        notes.append(f"ties: {ties} copy statistics equal t0")
    pv = crt_pvalue(t0, stats)
    rpv = randomized_pvalue(t0, stats, rngmod.substream(cfg.seed, rngmod.RANDOMIZE))
    return CrtResult(float(t0), [float(s) for s in stats], pv, rpv, cfg.statistic,
                     cfg.sampler, cfg.M, cfg.L, int(cfg.seed), notes)
