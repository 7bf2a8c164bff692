"""Group-wise testing with BH, BY and e-BH selection.

BH applied to CRT p-values is provided for comparison; its FDR guarantee
needs positive dependence among the group p-values, which is not
established for these tests. BY and e-BH are valid under arbitrary
dependence.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .engine import CrtConfig, _matrix, run_crt
from .errors import ConfigurationError, DomainError
from .samplers import _map

PROCEDURES = ("bh", "by", "ebh")


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ConfigurationError("alpha must lie in (0, 1)")


def bh_select(pvalues: Sequence[float], alpha: float) -> list[int]:
    """Benjamini-Hochberg: reject every ``p <= p_(k*)`` with the largest
    ``k*`` such that ``p_(k*) <= k* alpha / g``. Returns 0-based indices."""
    _check_alpha(alpha)
    p = np.asarray(pvalues, dtype=float)
    g = p.size
    if g == 0:
        return []
    order = np.argsort(p, kind="stable")
    ok = np.flatnonzero(p[order] <= alpha * np.arange(1, g + 1) / g)
    if ok.size == 0:
        return []
    return sorted(int(i) for i in order[: ok[-1] + 1])


def by_select(pvalues: Sequence[float], alpha: float) -> list[int]:
    """Benjamini-Yekutieli: BH at level ``alpha / sum_{i<=g} 1/i``."""
    g = len(pvalues)
    c = float(np.sum(1.0 / np.arange(1, g + 1))) if g else 1.0
    _check_alpha(alpha)
    return bh_select(pvalues, alpha / c)


def p_to_boosted_e(pvalues: Sequence[float], alpha: float, g: int | None = None) -> np.ndarray:
    """Map p-values to boosted e-values.

    With ``delta_k = alpha / (g (1 + k))`` and cumulative thresholds
    ``b_i = delta_1 + ... + delta_i``, a p-value exceeding exactly ``i`` of
    ``b_1..b_g`` (strict comparison) becomes ``g / (alpha (i + 1))``.
    """
    _check_alpha(alpha)
    p = np.asarray(pvalues, dtype=float)
    g = p.size if g is None else int(g)
    if g < 1:
        raise ConfigurationError("g must be positive")
    k = np.arange(1, g + 1)
    b = np.cumsum(alpha / (g * (1.0 + k)))
    i = np.searchsorted(b, p, side="left")  # number of b_k strictly below p
    return g / (alpha * (i + 1.0))


def ebh_select(evalues: Sequence[float], alpha: float) -> list[int]:
    """e-BH: BH on the reciprocals ``1 / E_j``."""
    e = np.asarray(evalues, dtype=float)
    if np.any(~(e > 0)):
        raise DomainError("e-values must be positive")
    return bh_select(1.0 / e, alpha)


def evalue_validity_mean(evalues: Sequence[float], alpha: float, g: int) -> tuple[float, float]:
    """Mean and standard error of ``T(alpha E)`` with ``T(z) = (g / ceil(g/z)) 1{z >= 1}``.

    Boosted e-values are valid for e-BH when this mean is at most ``alpha``
    for uniform input p-values.
    """
    z = alpha * np.asarray(evalues, dtype=float)
    with np.errstate(divide="ignore"):
        tz = np.where(z >= 1, g / np.ceil(g / np.where(z > 0, z, 1.0)), 0.0)
    return float(tz.mean()), float(tz.std(ddof=1) / np.sqrt(tz.size))


@dataclass(frozen=True)
class GroupSpec:
    """Disjoint 0-based index groups partitioning ``range(p)``."""

    groups: tuple[tuple[int, ...], ...]
    p: int

    def __post_init__(self):
        seen: dict[int, int] = {}
        for gi, grp in enumerate(self.groups):
            if not grp:
                raise ConfigurationError(f"group {gi + 1} is empty")
            for j in grp:
                if not 0 <= j < self.p:
                    raise ConfigurationError(f"index {j + 1} out of range 1..{self.p}")
                if j in seen:
                    raise ConfigurationError(
                        f"index {j + 1} appears in groups {seen[j] + 1} and {gi + 1}"
                    )
                seen[j] = gi
        missing = sorted(set(range(self.p)) - set(seen))
        if missing:
            raise ConfigurationError(
                f"groups do not cover indices {[m + 1 for m in missing[:10]]}"
            )

    @classmethod
    def contiguous(cls, p: int, size: int) -> GroupSpec:
        if p % size:
            raise ConfigurationError(f"p={p} is not a multiple of group size {size}")
        return cls(tuple(tuple(range(k, k + size)) for k in range(0, p, size)), p)

    def __len__(self) -> int:
        return len(self.groups)


def parse_groups(text: str, p: int) -> GroupSpec:
    """One group per line, comma-separated 1-based indices; ``#`` starts a comment."""
    groups = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        grp = []
        for tok in line.split(","):
            tok = tok.strip()
            if not tok:
                continue
            try:
                v = int(tok)
            except ValueError:
                raise ConfigurationError(f"line {lineno}: {tok!r} is not an integer") from None
            if v - 1 in grp:
                raise ConfigurationError(f"line {lineno}: duplicate index {v}")
            grp.append(v - 1)
        groups.append(tuple(grp))
    return GroupSpec(tuple(groups), p)


def read_groups(path, p: int) -> GroupSpec:
    return parse_groups(Path(path).read_text(), p)


@dataclass
class GroupSelectionResult:
    pvalues: list[float]
    randomized_pvalues: list[float]
    evalues: list[float]
    rejected: dict[str, list[int]]
    alpha: float
    fdp: dict[str, float] | None = None
    power: dict[str, float] | None = None
    warnings: list[str] = field(default_factory=list)


def selection_metrics(rejected: Iterable[int], truth: Iterable[int]) -> tuple[float, float]:
    """False discovery proportion and power of one rejection set."""
    rej, tru = set(rejected), set(truth)
    fdp = len(rej - tru) / max(len(rej), 1)
    power = len(rej & tru) / len(tru) if tru else 0.0
    return fdp, power


def apply_procedures(pvalues, randomized, alpha: float, procedures=PROCEDURES):
    """Rejection sets per procedure; e-BH uses the randomized p-values."""
    g = len(pvalues)
    e = p_to_boosted_e(randomized, alpha, g)
    out = {}
    for proc in procedures:
        proc = proc.lower()
        if proc == "bh":
            out["bh"] = bh_select(pvalues, alpha)
        elif proc == "by":
            out["by"] = by_select(pvalues, alpha)
        elif proc == "ebh":
            out["ebh"] = ebh_select(e, alpha)
        else:
            raise DomainError(f"unknown procedure {proc!r}; choose from {', '.join(PROCEDURES)}")
    return out, e


def group_select(Y, X, groups: GroupSpec, base_cfg: CrtConfig,
                 procedures: Sequence[str] = PROCEDURES, alpha: float | None = None,
                 truth: Iterable[int] | None = None, n_jobs: int = 1) -> GroupSelectionResult:
    """One test per group (``T = group``, ``S`` = the rest), then selection.

    Group ``j`` runs with seed ``derive_seed(base_cfg.seed, GROUP, j)``.
    ``truth`` holds 0-based indices of non-null groups.
    """
    Xv = _matrix(X)
    if groups.p != Xv.shape[1]:
        raise ConfigurationError(f"groups cover {groups.p} columns but data have {Xv.shape[1]}")
    alpha = base_cfg.alpha if alpha is None else alpha
    _check_alpha(alpha)

    def one(j):
        cfg = replace(base_cfg, tested=groups.groups[j], conditioning=None,
                      seed=rngmod.derive_seed(base_cfg.seed, rngmod.GROUP, j))
        return run_crt(Y, Xv, cfg)

    results = _map(one, range(len(groups)), n_jobs)
    pv = [r.pvalue for r in results]
    rpv = [r.randomized_pvalue for r in results]
    rejected, e = apply_procedures(pv, rpv, alpha, procedures)
    notes = sorted({f"group {j + 1}: {w}" for j, r in enumerate(results) for w in r.warnings
                    if not w.startswith("ties")})
    out = GroupSelectionResult(pv, rpv, [float(v) for v in e], rejected, alpha, warnings=notes)
    if truth is not None:
        truth = list(truth)
        out.fdp, out.power = {}, {}
        for k, rej in rejected.items():
            out.fdp[k], out.power[k] = selection_metrics(rej, truth)
    return out
