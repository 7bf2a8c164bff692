"""Synthetic designs and Monte Carlo power / FDR studies.

Covariates come from a band Gaussian graphical model (or a heavy-tailed
AR(6) design sharing the same band graph); responses follow one of five
families whose dependence on the tested block ``X_T`` (the first 8
columns) is scaled by ``theta``. With ``theta = 0`` the null holds.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import stats as sps

from . import rng as rngmod
from .engine import SAMPLERS, CrtConfig, run_crt
from .errors import DomainError, InvalidSupergraphError, MscrtError, ScenarioError
from .graph import Graph
from .linalg import Array, DataMatrix, least_squares
from .multiplicity import PROCEDURES, GroupSpec, group_select
from .statistics import canonical_kind

FAMILIES = ("linear", "nonlinear", "logistic", "nonlinear-binary", "group-linear")
COVARIATE_MODELS = ("gaussian-band", "ar6-t3")
N_SIGNAL = 20
N_TESTED = 8
STEP_CUT = float(sps.norm.ppf(2.0 / 3.0))  # 0.4307...
AR_GAMMA = np.array([1, 1, -1, -1, 1, 1]) / 5.0
AR_SIGMA = 0.7
GROUP_SIZE = 8
GROUP_SIGNALS = (7, 7, 6)
ORACLE = "oracle"


# ---------------------------------------------------------------- covariates


def band_precision(p: int, K: int, s: float, permutation: Sequence[int] | None = None):
    """Band precision matrix rescaled to a unit-diagonal covariance.

    Returns ``(Omega, Sigma, graph)`` where ``Sigma = inv(Omega)`` has unit
    diagonal. Original node ``k`` is placed at position ``permutation[k]``
    in both matrices and the graph.
    """
    if p < 1 or K < 0:
        raise ScenarioError("need p >= 1 and K >= 0")
    idx = np.arange(p)
    dist = np.abs(idx[:, None] - idx[None, :])
    omega = np.where(dist == 0, 1.0, np.where(dist <= K, float(s), 0.0))
    eig = np.linalg.eigvalsh(omega)
    if eig[0] <= 0:
        raise DomainError(f"band precision is not positive definite (min eigenvalue {eig[0]:.4g})")
    sigma = np.linalg.inv(omega)
    d = np.sqrt(np.diag(sigma))
    sigma = sigma / np.outer(d, d)
    omega = omega * np.outer(d, d)
    sigma = (sigma + sigma.T) / 2
    perm = np.arange(p) if permutation is None else np.asarray(permutation, dtype=int)
    if sorted(perm.tolist()) != list(range(p)):
        raise ScenarioError("permutation must be a rearrangement of 0..p-1")
    inv = np.argsort(perm)  # position -> original node
    omega = omega[np.ix_(inv, inv)]
    sigma = sigma[np.ix_(inv, inv)]
    return omega, sigma, Graph.band(p, K, perm)


def _band_of(graph: Graph, permutation: Sequence[int]) -> int:
    inv = np.argsort(np.asarray(permutation))
    return max((abs(int(inv[i]) - int(inv[j])) for i, j in graph.edges()), default=0)


def supergraph_variant(graph: Graph, bandwidth: int,
                       permutation: Sequence[int] | None = None) -> Graph:
    """Band graph of a wider ``bandwidth`` under the same node permutation."""
    p = graph.node_count
    perm = np.arange(p) if permutation is None else np.asarray(permutation, dtype=int)
    K = _band_of(graph, perm)
    if bandwidth < K:
        raise InvalidSupergraphError(f"bandwidth {bandwidth} is below the faithful bandwidth {K}")
    out = Graph.band(p, bandwidth, perm)
    if not graph.issubgraph(out):
        raise InvalidSupergraphError("graph is not a band graph under this permutation")
    return out


def gen_covariates(model: str, n: int, p: int, rng, bandwidth: int = 6, offdiag: float = 0.2,
                   permutation: Sequence[int] | None = None) -> DataMatrix:
    """``n x p`` covariates from ``gaussian-band`` or ``ar6-t3``."""
    rng = rngmod.as_generator(rng)
    perm = np.arange(p) if permutation is None else np.asarray(permutation, dtype=int)
    if model == "gaussian-band":
        _, sigma, _ = band_precision(p, bandwidth, offdiag, perm)
        L = np.linalg.cholesky(sigma)
        X = rng.standard_normal((n, p)) @ L.T
    elif model == "ar6-t3":
        X0 = np.empty((n, p))
        X0[:, 0] = rng.standard_t(3, n)
        eps = rng.standard_t(3, (n, p))
        for j in range(1, p):
            k = min(j, len(AR_GAMMA))
            X0[:, j] = X0[:, j - k : j][:, ::-1] @ AR_GAMMA[:k] + AR_SIGMA * eps[:, j]
        X = np.empty_like(X0)
        X[:, perm] = X0
    else:
        raise ScenarioError(f"unknown covariate model {model!r}")
    return DataMatrix(X)


# ------------------------------------------------------------------ responses


def nonlinear_basis(X) -> Array:
    """The 14 nonlinear features of ``x_1..x_20`` (two blocks of seven)."""
    X = np.asarray(X, dtype=float)
    blocks = []
    for o in (0, 10):
        x = X[:, o : o + 10]
        blocks += [
            x[:, 0] ** 2 / 2,
            1 / (1 + x[:, 1] ** 2),
            np.cos(np.pi * x[:, 2]),
            np.sin(np.pi * x[:, 3]),
            x[:, 4] * x[:, 5],
            np.sin(x[:, 6] * x[:, 7]),
            np.sin(np.pi * x[:, 8]) / (4 + x[:, 9] ** 2),
        ]
    return np.column_stack(blocks)


def step_transform(x) -> Array:
    """``+1/4`` outside the middle normal tercile, ``-1/2`` inside it."""
    x = np.asarray(x, dtype=float)
    mid = (x >= -STEP_CUT) & (x <= STEP_CUT)
    return np.where(mid, -0.5, 0.25)


def group_signal_positions() -> list[int]:
    out = []
    for g, k in enumerate(GROUP_SIGNALS):
        out += list(range(g * GROUP_SIZE, g * GROUP_SIZE + k))
    return out


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def gen_response(family: str, X, theta: float, rng) -> tuple[Array, Array]:
    """Draw ``Y`` for ``family``; returns ``(Y, beta)``.

    The random draws do not depend on ``theta``, so runs that share a
    stream see the same coefficients and noise across a theta grid.
    """
    X = X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=float)
    n, p = X.shape
    if p < N_SIGNAL:
        raise ScenarioError(f"family {family!r} needs p >= {N_SIGNAL}, got {p}")
    rng = rngmod.as_generator(rng)
    lo, hi = 1 / math.sqrt(N_SIGNAL), 2 / math.sqrt(N_SIGNAL)
    if family in ("linear", "logistic"):
        beta = np.zeros(p)
        beta[:N_SIGNAL] = rng.uniform(lo, hi, N_SIGNAL)
        beta[:N_TESTED] *= theta
        eta = X @ beta
        if family == "linear":
            return eta + rng.standard_normal(n), beta
        return (rng.random(n) < _sigmoid(eta)).astype(float), beta
    if family == "nonlinear":
        beta = np.r_[np.full(7, float(theta)), np.ones(7)]
        return nonlinear_basis(X) @ beta + rng.standard_normal(n), beta
    if family == "nonlinear-binary":
        beta = np.r_[np.full(10, float(theta)), np.ones(10)]
        eta = step_transform(X[:, :N_SIGNAL]) @ beta
        return (rng.random(n) < _sigmoid(eta)).astype(float), beta
    if family == "group-linear":
        if p < 3 * GROUP_SIZE:
            raise ScenarioError("group-linear needs p >= 24")
        beta = np.zeros(p)
        beta[group_signal_positions()] = theta
        return X @ beta + rng.standard_normal(n), beta
    raise ScenarioError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")


# ----------------------------------------------------------------- F oracle


def f_test_pvalue(Y, X, tested: Sequence[int]) -> float:
    """Classical F-test of ``beta_T = 0`` in ``Y ~ 1 + X`` (needs ``n > p + 1``)."""
    X = X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, p = X.shape
    T = list(tested)
    S = [j for j in range(p) if j not in set(T)]
    if n <= p + 1:
        raise DomainError("F-test needs n > p + 1")
    one = np.ones((n, 1))
    rss1 = float(np.sum(least_squares(np.hstack([one, X]), Y).residual ** 2))
    rss0 = float(np.sum(least_squares(np.hstack([one, X[:, S]]), Y).residual ** 2))
    df2 = n - p - 1
    F = ((rss0 - rss1) / len(T)) / (rss1 / df2)
    return float(sps.f.sf(F, len(T), df2))


# ------------------------------------------------------------------ scenario


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation study. ``methods`` holds ``(sampler, statistic)`` pairs;
    the pair ``("oracle", "F-test")`` adds the classical F-test on the same
    replications."""

    n: int = 50
    p: int = 20
    bandwidth: int = 6
    offdiag: float = 0.2
    family: str = "linear"
    theta_grid: tuple[float, ...] = (0.0,)
    methods: tuple[tuple[str, str], ...] = (("graph-gaussian", "LM-SSR"),)
    reps: int = 400
    alpha: float = 0.05
    m: int = 100
    sweeps: int = 3
    covariate_model: str = "gaussian-band"
    test_bandwidth: int | None = None
    seed: int = 0
    trees: int = 500

    def __post_init__(self):
        bad = []
        if not isinstance(self.n, int) or self.n < 2:
            bad.append("n")
        if not isinstance(self.p, int) or self.p < 1:
            bad.append("p")
        if self.family not in FAMILIES:
            bad.append("family")
        if self.covariate_model not in COVARIATE_MODELS:
            bad.append("covariate_model")
        if not self.theta_grid:
            bad.append("theta_grid")
        if not isinstance(self.reps, int) or self.reps < 1:
            bad.append("reps")
        if not 0 < self.alpha < 1:
            bad.append("alpha")
        if self.m < 1:
            bad.append("m")
        if self.sweeps < 1:
            bad.append("sweeps")
        if self.test_bandwidth is not None and self.test_bandwidth < self.bandwidth:
            bad.append("test_bandwidth")
        methods = []
        for meth in self.methods:
            try:
                sampler, stat = meth.split(":") if isinstance(meth, str) else meth
                if sampler == ORACLE:
                    if stat.lower() != "f-test":
                        raise ValueError
                    stat = "F-test"
                else:
                    if sampler not in SAMPLERS:
                        raise ValueError
                    stat = canonical_kind(stat)
                methods.append((sampler, stat))
            except (ValueError, MscrtError):
                bad.append("methods")
                break
        if not methods and "methods" not in bad:
            bad.append("methods")
        if bad:
            raise ScenarioError(f"invalid scenario keys: {', '.join(bad)}")
        object.__setattr__(self, "theta_grid", tuple(float(t) for t in self.theta_grid))
        object.__setattr__(self, "methods", tuple(methods))

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ScenarioError(f"malformed scenario: {e}") from None

    @classmethod
    def from_json(cls, text: str) -> ScenarioConfig:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"scenario is not valid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["theta_grid"] = list(self.theta_grid)
        d["methods"] = [f"{a}:{b}" for a, b in self.methods]
        return d

    def permutation(self) -> Array:
        return rngmod.substream(self.seed, rngmod.DATA).permutation(self.p)

    def graphs(self) -> tuple[Graph, Graph]:
        """Faithful graph and the graph handed to the samplers."""
        perm = self.permutation()
        faithful = Graph.band(self.p, self.bandwidth, perm)
        K = self.bandwidth if self.test_bandwidth is None else self.test_bandwidth
        return faithful, supergraph_variant(faithful, K, perm)

    def replicate(self, r: int, theta: float) -> tuple[DataMatrix, Array, Array]:
        """Data for replication ``r``; identical draws for every theta."""
        rng = rngmod.substream(self.seed, rngmod.DATA, 1, r)
        X = gen_covariates(self.covariate_model, self.n, self.p, rng, self.bandwidth,
                           self.offdiag, self.permutation())
        Y, beta = gen_response(self.family, X, theta, rng)
        return X, Y, beta


# ------------------------------------------------------------------- tables


@dataclass(frozen=True)
class PowerRow:
    theta: float
    method: str
    rejections: int
    reps: int

    @property
    def power(self) -> float:
        return self.rejections / self.reps

    @property
    def se(self) -> float:
        pw = self.power
        return math.sqrt(pw * (1 - pw) / self.reps)


@dataclass
class PowerTable:
    rows: list[PowerRow] = field(default_factory=list)
    pvalues: dict[tuple[float, str], list[float]] = field(default_factory=dict)

    HEADER = ("theta", "method", "rejections", "reps", "power", "se")

    def get(self, theta: float, method: str) -> PowerRow:
        for r in self.rows:
            if r.theta == theta and r.method == method:
                return r
        raise KeyError((theta, method))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for r in self.rows:
            w.writerow([repr(r.theta), r.method, r.rejections, r.reps, repr(r.power), repr(r.se)])
        return buf.getvalue()


def method_name(method: tuple[str, str]) -> str:
    return f"{method[0]}:{method[1]}"


def _crt_config(sc: ScenarioConfig, method, graph: Graph, seed: int, tested) -> CrtConfig:
    sampler, stat = method
    return CrtConfig(tested=tuple(tested), sampler=sampler,
                     graph=None if sampler == "mvn" else graph, statistic=stat,
                     M=sc.m, L=sc.sweeps, seed=seed, alpha=sc.alpha, trees=sc.trees)


def _context(e: MscrtError, msg: str) -> MscrtError:
    try:
        new = type(e)(f"{msg}: {e}")
    except TypeError:  # pragma: no cover
        return e
    return new


def run_power_study(sc: ScenarioConfig, progress: Callable[[str], None] | None = None,
                    n_jobs: int = 1) -> PowerTable:
    """Rejection counts for every (theta, method) over ``sc.reps`` replications.

    Replication ``r`` shares its data across methods, so method
    comparisons are paired. A failing replication aborts the study.
    """
    _, graph = sc.graphs()
    tested = range(N_TESTED)
    table = PowerTable()
    for ti, theta in enumerate(sc.theta_grid):
        counts = {m: 0 for m in sc.methods}
        pvals: dict = {m: [] for m in sc.methods}
        for r in range(sc.reps):
            X, Y, _ = sc.replicate(r, theta)
            seed = rngmod.derive_seed(sc.seed, rngmod.REPLICATION, ti, r)
            for method in sc.methods:
                try:
                    if method[0] == ORACLE:
                        pv = f_test_pvalue(Y, X, tested)
                    else:
                        cfg = replace(_crt_config(sc, method, graph, seed, tested), n_jobs=n_jobs)
                        pv = run_crt(Y, X, cfg).pvalue
                except MscrtError as e:
                    raise _context(
                        e, f"theta={theta} replication={r} method={method_name(method)}"
                    ) from e
                pvals[method].append(pv)
                counts[method] += pv <= sc.alpha
            if progress and (r + 1) % max(1, sc.reps // 10) == 0:
                progress(f"theta={theta}: {r + 1}/{sc.reps} replications")
        for method in sc.methods:
            table.rows.append(PowerRow(theta, method_name(method), int(counts[method]), sc.reps))
            table.pvalues[(theta, method_name(method))] = pvals[method]
    return table


@dataclass(frozen=True)
class GroupRow:
    theta: float
    method: str
    procedure: str
    reps: int
    rejections: int
    fdr: float
    fdr_se: float
    power: float
    power_se: float


@dataclass
class GroupTable:
    rows: list[GroupRow] = field(default_factory=list)

    HEADER = ("theta", "method", "procedure", "reps", "rejections", "fdr", "fdr_se",
              "power", "power_se")

    def get(self, theta: float, procedure: str, method: str | None = None) -> GroupRow:
        for r in self.rows:
            if r.theta == theta and r.procedure == procedure and method in (None, r.method):
                return r
        raise KeyError((theta, procedure))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for r in self.rows:
            w.writerow([repr(r.theta), r.method, r.procedure, r.reps, r.rejections,
                        repr(r.fdr), repr(r.fdr_se), repr(r.power), repr(r.power_se)])
        return buf.getvalue()


def _mean_se(v) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def run_group_study(sc: ScenarioConfig, procedures: Sequence[str] = PROCEDURES,
                    fdr_level: float = 0.1,
                    progress: Callable[[str], None] | None = None) -> GroupTable:
    """Mean FDP and power of each selection procedure over ``sc.reps`` replications."""
    if sc.family != "group-linear":
        raise ScenarioError("group study needs the group-linear family")
    _, graph = sc.graphs()
    groups = GroupSpec.contiguous(sc.p, GROUP_SIZE)
    table = GroupTable()
    for ti, theta in enumerate(sc.theta_grid):
        truth = sorted({j // GROUP_SIZE for j in group_signal_positions()}) if theta != 0 else []
        for method in sc.methods:
            if method[0] == ORACLE:
                raise ScenarioError("the F-test oracle has no group-selection form")
            fdp = {k: [] for k in procedures}
            pw = {k: [] for k in procedures}
            nrej = {k: 0 for k in procedures}
            for r in range(sc.reps):
                X, Y, _ = sc.replicate(r, theta)
                seed = rngmod.derive_seed(sc.seed, rngmod.REPLICATION, ti, r)
                cfg = _crt_config(sc, method, graph, seed, groups.groups[0])
                try:
                    res = group_select(Y, X, groups, cfg, procedures, fdr_level, truth)
                except MscrtError as e:
                    raise _context(e, f"theta={theta} replication={r}") from e
                for k in procedures:
                    fdp[k].append(res.fdp[k])
                    pw[k].append(res.power[k])
                    nrej[k] += len(res.rejected[k])
                if progress and (r + 1) % max(1, sc.reps // 10) == 0:
                    progress(f"theta={theta}: {r + 1}/{sc.reps} replications")
            for k in procedures:
                f, fse = _mean_se(fdp[k])
                p_, pse = _mean_se(pw[k])
                table.rows.append(GroupRow(theta, method_name(method), k, sc.reps, nrej[k],
                                           f, fse, p_, pse))
    return table


def stderr_progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)
