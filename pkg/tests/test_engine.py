from __future__ import annotations

import json

import numpy as np
import pytest

from mscrt.engine import (
    CrtConfig,
    crt_pvalue,
    randomized_pvalue,
    run_crt,
    sample_copies,
    tie_count,
)
from mscrt.errors import ConfigurationError, DomainError, FeasibilityError
from mscrt.graph import Graph


def test_pvalue_example():
    assert crt_pvalue(5.0, [1.0, 6.0, 5.0, 2.0]) == pytest.approx(0.6)


def test_pvalue_extremes():
    assert crt_pvalue(10.0, np.zeros(99)) == pytest.approx(0.01)
    assert crt_pvalue(-1.0, np.zeros(99)) == 1.0


@pytest.mark.parametrize("conv,lo,hi", [("exact", 1 / 3, 2 / 3), ("as-written", 0.5, 1.0)])
def test_randomized_interval(conv, lo, hi):
    draws = [randomized_pvalue(2.0, [1.0, 3.0], s, conv) for s in range(300)]
    assert min(draws) >= lo and max(draws) <= hi
    assert max(draws) - min(draws) > 0.3 * (hi - lo)


def test_randomized_all_ties():
    draws = [randomized_pvalue(1.0, [1.0] * 4, s) for s in range(300)]
    assert 0 <= min(draws) and max(draws) <= 1 and max(draws) > 0.8


def test_randomized_no_ties_within_one_slot():
    for s in range(50):
        v = randomized_pvalue(0.0, [1.0, -1.0, 2.0], s)
        assert 0.5 <= v <= 0.75


def test_randomized_uniform_under_null():
    from scipy import stats
    rs = np.random.default_rng(3)
    vals = []
    for s in range(2000):
        z = rs.integers(0, 3, 6).astype(float)
        vals.append(randomized_pvalue(z[0], z[1:], s))
    assert stats.kstest(vals, "uniform").pvalue > 0.001


def test_unknown_convention():
    with pytest.raises(DomainError):
        randomized_pvalue(0.0, [1.0], 0, "other")


def test_tie_count():
    assert tie_count(1.0, [1.0, 1.0, 2.0]) == 2


class TestConfig:
    def test_graph_sampler_needs_graph(self):
        with pytest.raises(ConfigurationError):
            CrtConfig(tested=(0,), sampler="graph-gaussian")

    def test_unknown_sampler(self):
        with pytest.raises(DomainError):
            CrtConfig(tested=(0,), sampler="gibbs")

    @pytest.mark.parametrize("kw", [{"M": 0}, {"L": 0}, {"alpha": 1.5}, {"tested": ()}])
    def test_bad_values(self, kw):
        with pytest.raises(ConfigurationError):
            CrtConfig(**{"tested": (0,), **kw})

    def test_resolve_sets(self):
        cfg = CrtConfig(tested=(1,), conditioning=(0, 3))
        assert cfg.resolve_sets(4) == ([1], [0, 3])
        with pytest.raises(ConfigurationError):
            CrtConfig(tested=(1,), conditioning=(1, 2)).resolve_sets(4)
        with pytest.raises(ConfigurationError):
            CrtConfig(tested=(5,)).resolve_sets(4)

    def test_graph_sampler_rejects_partial_conditioning(self):
        g = Graph.band(4, 1)
        with pytest.raises(ConfigurationError):
            CrtConfig(tested=(0,), conditioning=(1,), sampler="graph-gaussian",
                      graph=g).resolve_sets(4)


@pytest.fixture
def lowdim(rng):
    X = rng.standard_normal((40, 6))
    Y = X[:, 0] + X[:, 4] + rng.standard_normal(40)
    return Y, X


class TestRun:
    def test_deterministic_across_threads(self, lowdim):
        Y, X = lowdim
        cfg = CrtConfig(tested=(0, 1), M=30, seed=5)
        a = run_crt(Y, X, cfg)
        b = run_crt(Y, X, CrtConfig(tested=(0, 1), M=30, seed=5, n_jobs=4))
        assert a.to_dict() == b.to_dict()

    def test_seed_changes_copies(self, lowdim):
        Y, X = lowdim
        a = run_crt(Y, X, CrtConfig(tested=(0,), M=20, seed=1))
        b = run_crt(Y, X, CrtConfig(tested=(0,), M=20, seed=2))
        assert a.copy_stats != b.copy_stats and a.t0 == b.t0

    def test_signal_detected(self, lowdim):
        Y, X = lowdim
        res = run_crt(Y, X, CrtConfig(tested=(0,), M=99, seed=0))
        assert res.pvalue == pytest.approx(0.01)
        assert res.rejects(0.05)

    def test_json_keys(self, lowdim):
        Y, X = lowdim
        d = json.loads(run_crt(Y, X, CrtConfig(tested=(0,), M=5)).to_json())
        assert {"t0", "copy_stats", "pvalue", "randomized_pvalue", "statistic",
                "sampler", "M", "L", "seed", "warnings"} <= set(d)
        assert len(d["copy_stats"]) == 5

    def test_infeasible_before_sampling(self, rng, monkeypatch):
        import mscrt.engine as eng
        monkeypatch.setattr(eng, "sample_copies", lambda *a: pytest.fail("sampled"))
        X = rng.standard_normal((10, 12))
        with pytest.raises(FeasibilityError):
            run_crt(rng.standard_normal(10), X, CrtConfig(tested=(0,)))

    def test_degenerate_copies_warning(self, rng):
        # x0 is an exact linear function of x1: its copy must equal it
        X = rng.standard_normal((30, 3))
        X[:, 0] = 2 * X[:, 1] - X[:, 2]
        res = run_crt(rng.standard_normal(30), X,
                      CrtConfig(tested=(0,), statistic="MaxCor", M=10))
        assert any(w.startswith("degenerate-copies") for w in res.warnings)
        assert res.pvalue == 1.0

    def test_response_length_mismatch(self, lowdim):
        Y, X = lowdim
        with pytest.raises(ConfigurationError):
            run_crt(Y[:-1], X, CrtConfig(tested=(0,)))

    def test_graph_sampler_run(self, rng):
        X = rng.standard_normal((60, 8))
        res = run_crt(rng.standard_normal(60), X,
                      CrtConfig(tested=(2,), sampler="graph-gaussian",
                                graph=Graph.band(8, 1), M=10, L=2, statistic="LM-SSR"))
        assert 0 < res.pvalue <= 1

    def test_sample_copies_graph_mismatch(self, rng):
        X = rng.standard_normal((20, 5))
        with pytest.raises(ConfigurationError):
            sample_copies(X, CrtConfig(tested=(0,), sampler="graph-gaussian",
                                       graph=Graph.band(4, 1)))

    def test_sampler_ignores_response(self, lowdim):
        Y, X = lowdim
        cfg = CrtConfig(tested=(0,), M=5, seed=3)
        a = run_crt(Y, X, cfg)
        b = run_crt(Y + 100.0, X, cfg)
        ca = sample_copies(X, cfg).copies
        assert len(ca) == 5 and a.M == b.M
