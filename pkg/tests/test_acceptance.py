"""End-to-end acceptance checks, one test per criterion.

Each test prints ``PASS criterion k`` or ``FAIL criterion k`` with the
measured quantity and the gate before asserting. Simulation seeds are fixed,
so every number reported here is reproducible.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
from scipy import stats as sps

from mscrt.engine import CrtConfig, run_crt
from mscrt.graph import Graph
from mscrt.multiplicity import evalue_validity_mean, p_to_boosted_e
from mscrt.samplers import (
    discrete_permutation_update,
    hub_sweep_copies,
    mvn_crt_copies,
    residual_rotation_update,
)
from mscrt.simulation import ScenarioConfig, run_group_study, run_power_study
from mscrt.statistics import (
    stat_lm_ssr,
    stat_lm_sst,
    stat_maxcor,
    stat_t_dense,
    stat_t_sparse,
)

pytestmark = pytest.mark.slow

NULL_GATE = 0.05 + 3 * math.sqrt(0.05 * 0.95 / 400)  # 0.0827


@pytest.fixture
def report(capsys):
    def emit(k: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
        assert ok, detail
    return emit


def rel_dev(a, b) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300))


def test_c01_gram_preservation(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for k in range(100):
        X = rng.standard_normal((50, 20))
        cs = mvn_crt_copies(X, range(8), M=1, rng=k)
        XS = np.column_stack([np.ones(50), X[:, 8:]])
        XT, C = X[:, :8], cs.copies[0]
        worst = max(worst, rel_dev(XS.T @ XT, XS.T @ C), rel_dev(XT.T @ XT, C.T @ C))
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-8 and dt < 5, f"max relative deviation {worst:.2e} (<= 1e-8), {dt:.2f}s (< 5s)")


def test_c02_rotation_statistics(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for k in range(100):
        n, d = 30, int(rng.integers(0, 11))
        X = rng.standard_normal((n, d + 1))
        nbrs = list(range(1, d + 1))
        new = residual_rotation_update(X, 0, nbrs, k)
        D = np.column_stack([np.ones(n), X[:, nbrs]])
        worst = max(worst, rel_dev(D.T @ X[:, 0], D.T @ new),
                    abs(np.linalg.norm(new) / np.linalg.norm(X[:, 0]) - 1))
    # the compiled sweep must satisfy the same identities; tested nodes
    # 0, 5, 11 share no neighbours, so each identity holds at the end
    g = Graph.band(12, 3)
    X = rng.standard_normal((40, 12))
    cs = hub_sweep_copies(X, g, [0, 5, 11], M=20, L=2, rng=3)
    for C in cs.copies:
        W = X.copy()
        W[:, [0, 5, 11]] = C
        for i in (0, 5, 11):
            D = np.column_stack([np.ones(40), W[:, g.neighbors(i)]])
            worst = max(worst, rel_dev(D.T @ X[:, i], D.T @ W[:, i]))
            worst = max(worst, abs(np.linalg.norm(W[:, i]) / np.linalg.norm(X[:, i]) - 1))
    dt = time.perf_counter() - t0
    report(2, worst <= 1e-8 and dt < 5, f"max relative deviation {worst:.2e} (<= 1e-8), {dt:.2f}s (< 5s)")


def test_c03_discrete_exactness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    ok = True
    singles = 0
    for k in range(100):
        n = int(rng.integers(5, 60))
        X = rng.integers(0, 3, (n, 4)).astype(float)
        new = discrete_permutation_update(X, 0, [1, 2, 3], k)
        _, strata = np.unique(X[:, 1:], axis=0, return_inverse=True)
        strata = strata.ravel()
        for s in np.unique(strata):
            a, b = X[strata == s, 0], new[strata == s]
            ok &= bool(np.array_equal(np.sort(a), np.sort(b)))
            if a.size == 1:
                singles += 1
                ok &= bool(a[0] == b[0])
    dt = time.perf_counter() - t0
    report(3, ok and dt < 5, f"counts preserved in all strata ({singles} singletons fixed), {dt:.2f}s")


LOW = {"n": 50, "p": 20}
HIGH = {"n": 80, "p": 120}
SIZE_CELLS = [
    *[("low", f"{s}:{k}") for s in ("mvn", "graph-gaussian")
      for k in ("LM-SST", "LM-SSR", "LM-L1-R-SSR", "T-dense", "T-sparse")],
    ("high", "graph-gaussian:LM-L1-R-SSR"),
]


@pytest.mark.parametrize("dim,method", SIZE_CELLS)
def test_c04_size_control(report, dim, method):
    sc = ScenarioConfig(**(LOW if dim == "low" else HIGH), theta_grid=(0.0,), methods=(method,),
                        reps=400, m=100, sweeps=3, seed=404)
    row = run_power_study(sc).rows[0]
    report(4, row.power <= NULL_GATE,
           f"{dim}-dim {method}: null rejection rate {row.power:.4f} over 400 reps (<= {NULL_GATE:.4f})")


def test_c04_size_control_forest(report):
    sc = ScenarioConfig(**LOW, theta_grid=(0.0,), methods=("graph-gaussian:RF-RR",),
                        reps=200, m=100, sweeps=3, seed=405, trees=100)
    row = run_power_study(sc).rows[0]
    report(4, row.power <= NULL_GATE,
           f"low-dim graph-gaussian:RF-RR (100 trees): null rejection rate {row.power:.4f} "
           f"over 200 reps (<= {NULL_GATE:.4f})")


def test_c05_randomized_uniformity(report):
    sc = ScenarioConfig(**LOW, theta_grid=(0.0,), seed=505)
    pv = []
    for r in range(2000):
        X, Y, _ = sc.replicate(r, 0.0)
        cfg = CrtConfig(tested=tuple(range(8)), statistic="T-sparse", M=100, seed=r)
        pv.append(run_crt(Y, X, cfg).randomized_pvalue)
    ks = sps.kstest(pv, "uniform").statistic
    report(5, ks < 0.05, f"KS distance {ks:.4f} over 2000 nulls (< 0.05)")


def test_c06_highdim_power(report):
    sc = ScenarioConfig(**HIGH, theta_grid=(1.25,), methods=("graph-gaussian:LM-L1-R-SSR",),
                        reps=200, m=100, sweeps=3, seed=606)
    row = run_power_study(sc).rows[0]
    report(6, row.power >= 0.85, f"power {row.power:.3f} at theta=1.25 over 200 reps (>= 0.85)")


def test_c07_lowdim_matches_oracle(report):
    sc = ScenarioConfig(**LOW, theta_grid=(1.0,), methods=("graph-gaussian:LM-SSR", "oracle:F-test"),
                        reps=400, m=100, sweeps=3, seed=707)
    t = run_power_study(sc)
    crt, f = t.get(1.0, "graph-gaussian:LM-SSR").power, t.get(1.0, "oracle:F-test").power
    report(7, abs(crt - f) <= 0.10,
           f"graph-gaussian:LM-SSR power {crt:.3f} vs F-test {f:.3f}, gap {abs(crt - f):.3f} (<= 0.10)")


def test_c08_evalue_validity(report):
    t0 = time.perf_counter()
    parts, ok = [], True
    for g, alpha in ((10, 0.1), (15, 0.1), (3, 0.05)):
        u = np.random.default_rng(800 + g).random(100_000)
        mean, se = evalue_validity_mean(p_to_boosted_e(u, alpha, g), alpha, g)
        ok &= mean <= alpha + 3 * se
        parts.append(f"(g={g}, a={alpha}): {mean:.4f} <= {alpha + 3 * se:.4f}")
    dt = time.perf_counter() - t0
    report(8, ok and dt < 5, "; ".join(parts) + f", {dt:.2f}s")


def test_c09_group_fdr(report):
    # M = 200: with 100 copies the smallest p-value 1/101 sits above the
    # first three BY thresholds for 15 groups, leaving BY without power.
    sc = ScenarioConfig(**HIGH, family="group-linear", theta_grid=(0.5, 1.0),
                        methods=("graph-gaussian:LM-L1-R-SSR",), reps=200, m=200, sweeps=3,
                        seed=909)
    t = run_group_study(sc, procedures=("bh", "by", "ebh"), fdr_level=0.1)
    ok, parts = True, []
    for theta in sc.theta_grid:
        e, b = t.get(theta, "ebh"), t.get(theta, "by")
        se = math.hypot(e.power_se, b.power_se)
        ok &= e.fdr <= 0.1 + 3 * e.fdr_se and b.fdr <= 0.1 + 3 * b.fdr_se
        ok &= e.power >= b.power - 2 * se
        parts.append(f"theta={theta}: FDR eBH {e.fdr:.3f} BY {b.fdr:.3f}, "
                     f"power eBH {e.power:.3f} BY {b.power:.3f}, BH FDR {t.get(theta, 'bh').fdr:.3f}")
    report(9, ok, "; ".join(parts))


def test_c10_supergraph(report):
    base = dict(**HIGH, theta_grid=(1.0,), methods=("graph-gaussian:LM-L1-R-SSR",),
                reps=200, m=100, sweeps=3, seed=1010)
    faithful = run_power_study(ScenarioConfig(**base)).rows[0].power
    wide = run_power_study(ScenarioConfig(**base, test_bandwidth=18)).rows[0].power
    report(10, abs(faithful - wide) <= 0.15,
           f"power K=6 {faithful:.3f} vs K'=18 {wide:.3f}, gap {abs(faithful - wide):.3f} (<= 0.15)")


def test_c11_hand_oracles(report):
    Y = np.array([0.0, 1.0, 2.0, 4.0])
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    got = {"LM-SST": stat_lm_sst(Y, X), "LM-SSR": stat_lm_ssr(Y, X), "T-dense": stat_t_dense(Y, X),
           "T-sparse": stat_t_sparse(Y, X), "MaxCor": stat_maxcor(Y, X)}
    # exact hand values: 1.3^2 / 0.03, -RSS, 1 - RSS / TSS, 6.5 / sqrt(5 * 8.75)
    r = 6.5 / math.sqrt(5 * 8.75)
    want = {"LM-SST": 169 / 3, "LM-SSR": -0.30, "T-dense": 1 - 0.30 / 8.75, "T-sparse": r,
            "MaxCor": r}
    ok = all(abs(got[k] - want[k]) <= 1e-4 for k in want)
    report(11, ok, ", ".join(f"{k} {got[k]:.5f}" for k in want))


def dense_power(t: int, c: float, reps: int = 200, n: int = 200, s: int = 20) -> float:
    hits = 0
    for r in range(reps):
        rng = np.random.default_rng([1212, t, r])
        X = rng.standard_normal((n, t + s))
        beta_t = np.full(t, c * t**0.25 / math.sqrt(n) / math.sqrt(t))
        Y = X[:, :t] @ beta_t + X[:, t:] @ np.full(s, 0.3) + rng.standard_normal(n)
        cfg = CrtConfig(tested=tuple(range(t)), statistic="T-dense", M=100, seed=r)
        hits += run_crt(Y, X, cfg).pvalue <= 0.05
    return hits / reps


def test_c12_dense_direction(report):
    ok, parts = True, []
    for t in (8, 32):
        pw = [dense_power(t, c) for c in (0, 2, 4, 8)]
        se = [math.sqrt(max(p * (1 - p), 1e-12) / 200) for p in pw]
        mono = all(pw[i + 1] >= pw[i] - 2 * math.hypot(se[i], se[i + 1]) for i in range(3))
        ok &= mono and pw[-1] >= 0.9
        parts.append(f"t={t}: " + " ".join(f"{p:.3f}" for p in pw))
    report(12, ok, "power at c=0,2,4,8 " + "; ".join(parts) + " (nondecreasing, >= 0.9 at c=8)")
