from __future__ import annotations

import numpy as np
import pytest
from scipy import stats as sps

from mscrt.errors import (
    DegenerateFitError,
    DegenerateInputError,
    DomainError,
    FeasibilityError,
    RankDeficiencyError,
    RankWarning,
)
from mscrt.samplers import mvn_crt_copies
from mscrt.statistics import (
    KINDS,
    DistillationContext,
    canonical_kind,
    check_feasible,
    make_distillation,
    prepare,
    stat_augmented,
    stat_glm_dev,
    stat_lm_ssr,
    stat_lm_sst,
    stat_maxcor,
    stat_residualized,
    stat_rf,
    stat_t_dense,
    stat_t_sparse,
)

DETERMINISTIC = ["LM-SST", "LM-SSR", "GLM-Dev", "MaxCor", "T-dense", "T-sparse"]


def ne_ssr(y, X):
    """Residual sum of squares via the normal equations, intercept included."""
    D = np.column_stack([np.ones(len(y)), X])
    beta = np.linalg.solve(D.T @ D, D.T @ y)
    r = y - D @ beta
    return float(r @ r)


class TestHandOracles:
    def test_lm_sst(self, four_point):
        Y, X = four_point
        assert stat_lm_sst(Y, X) == pytest.approx(1.3**2 / 0.03, abs=1e-8)

    def test_lm_ssr(self, four_point):
        Y, X = four_point
        assert stat_lm_ssr(Y, X) == pytest.approx(-0.30, abs=1e-12)

    def test_maxcor(self, four_point):
        Y, X = four_point
        assert stat_maxcor(Y, X) == pytest.approx(6.5 / np.sqrt(5 * 8.75), abs=1e-12)

    def test_t_dense(self, four_point):
        Y, X = four_point
        assert stat_t_dense(Y, X) == pytest.approx(1 - 0.30 / 8.75, abs=1e-12)

    def test_t_sparse_reduces_to_maxcor(self, four_point):
        Y, X = four_point
        assert stat_t_sparse(Y, X) == pytest.approx(stat_maxcor(Y, X), abs=1e-12)

    def test_binomial_intercept_only(self):
        v = stat_glm_dev([0.0, 1.0], np.zeros((2, 0)), None, "binomial")
        assert v == pytest.approx(-4 * np.log(2))


class TestDirect:
    def test_constant_tested_column(self):
        with pytest.raises(RankDeficiencyError):
            stat_lm_sst(np.arange(5.0), np.ones((5, 1)))

    def test_zero_residual_variance(self):
        x = np.arange(5.0)
        with pytest.raises(DegenerateFitError):
            stat_lm_sst(2 * x, x[:, None])

    def test_perfect_fit_ssr_zero(self, rng):
        X = rng.standard_normal((10, 2))
        assert stat_lm_ssr(X @ [1.0, 2.0] + 3, X) == pytest.approx(0.0, abs=1e-20)

    def test_zero_conditioning_column_dropped(self, rng):
        Y = rng.standard_normal(12)
        X_T, X_S = rng.standard_normal((12, 2)), rng.standard_normal((12, 2))
        base = stat_lm_ssr(Y, X_T, X_S)
        with pytest.warns(RankWarning):
            padded = stat_lm_ssr(Y, X_T, np.column_stack([X_S, np.zeros(12)]))
        assert padded == pytest.approx(base, rel=1e-12)

    def test_gaussian_glm_equals_lm_ssr(self, rng):
        Y = rng.standard_normal(15)
        X_T, X_S = rng.standard_normal((15, 3)), rng.standard_normal((15, 2))
        assert stat_glm_dev(Y, X_T, X_S, "gaussian") == pytest.approx(
            stat_lm_ssr(Y, X_T, X_S), abs=1e-10
        )

    def test_binomial_separation_near_zero(self):
        x = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
        y = (x > 0).astype(float)
        with pytest.warns(UserWarning):
            v = stat_glm_dev(y, x[:, None], None, "binomial")
        assert -1e-3 < v <= 0

    def test_maxcor_values(self):
        Y = np.array([1.0, 2.0, 3.0])
        assert stat_maxcor(Y, np.array([[1, 3], [2, 2], [3, 1.0]])) == pytest.approx(1.0)
        assert stat_maxcor(Y, np.array([[1.0], [-2.0], [1.0]])) == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(DegenerateInputError):
            stat_maxcor(Y, np.ones((3, 1)))

    @pytest.mark.parametrize("kind", DETERMINISTIC)
    def test_row_permutation_invariance(self, rng, kind):
        n = 30
        Y, X_T, X_S = rng.standard_normal(n), rng.standard_normal((n, 3)), rng.standard_normal((n, 4))
        perm = rng.permutation(n)
        a = prepare(kind, Y, X_S).evaluate(X_T, None)
        b = prepare(kind, Y[perm], X_S[perm]).evaluate(X_T[perm], None)
        assert a == pytest.approx(b, rel=1e-10, abs=1e-10)

    @pytest.mark.parametrize("kind", ["T-dense", "T-sparse", "MaxCor", "LM-SST"])
    def test_scale_free(self, rng, kind):
        n = 25
        Y, X_T, X_S = rng.standard_normal(n), rng.standard_normal((n, 2)), rng.standard_normal((n, 3))
        a = prepare(kind, Y, X_S).evaluate(X_T, None)
        b = prepare(kind, 7.5 * Y, X_S).evaluate(X_T, None)
        assert a == pytest.approx(b, rel=1e-10)

    @pytest.mark.parametrize("kind", ["T-dense", "T-sparse", "MaxCor"])
    def test_unit_interval(self, rng, kind):
        for _ in range(20):
            n = 15
            v = prepare(kind, rng.standard_normal(n), rng.standard_normal((n, 2))).evaluate(
                rng.standard_normal((n, 3)), None
            )
            assert 0 <= v <= 1 + 1e-12


class TestProjected:
    def test_orthogonal_residuals_give_zero(self):
        Y = np.array([1.0, -1.0, 1.0, -1.0])
        X = np.array([[1.0], [1.0], [-1.0], [-1.0]])
        assert stat_t_dense(Y, X) == pytest.approx(0.0, abs=1e-12)
        assert stat_t_sparse(Y, X) == pytest.approx(0.0, abs=1e-12)

    def test_perfect_fit_gives_one(self, rng):
        X_T, X_S = rng.standard_normal((12, 2)), rng.standard_normal((12, 2))
        Y = X_T @ [1.0, -2.0] + X_S @ [0.5, 0.5]
        assert stat_t_dense(Y, X_T, X_S) == pytest.approx(1.0, abs=1e-10)
        assert stat_t_sparse(Y, X_T[:, :1], X_S) <= 1.0

    def test_sparse_proportional_singleton(self, rng):
        X_S = rng.standard_normal((10, 2))
        x = rng.standard_normal(10)
        assert stat_t_sparse(3 * x + X_S @ [1.0, 1.0], x[:, None], X_S) == pytest.approx(1.0)

    def test_response_in_conditioning_span(self, rng):
        X_S = rng.standard_normal((10, 2))
        with pytest.raises(DegenerateInputError):
            stat_t_dense(X_S @ [1.0, 2.0], rng.standard_normal((10, 1)), X_S)


class TestDistillation:
    def test_empty_conditioning_lasso(self, rng):
        Y = rng.standard_normal(20)
        ctx = make_distillation(Y, np.zeros((20, 0)), "lasso-gaussian", rng)
        assert np.allclose(ctx.fitted_null, Y.mean())

    def test_linear_signal_mostly_removed(self):
        ok = 0
        for seed in range(20):
            r = np.random.default_rng(seed)
            X_S = r.standard_normal((60, 5))
            Y = X_S @ [1.0, 2.0, -1.0, 0.5, 0.0] + 0.01 * r.standard_normal(60)
            ctx = make_distillation(Y, X_S, "lasso-gaussian", r)
            ok += ctx.residual @ ctx.residual <= 0.01 * np.sum((Y - Y.mean()) ** 2)
        assert ok >= 19

    def test_context_is_immutable(self, rng):
        ctx = make_distillation(rng.standard_normal(20), rng.standard_normal((20, 3)),
                                "lasso-gaussian", rng)
        with pytest.raises(ValueError):
            ctx.residual[0] = 1.0

    def test_forest_distiller_binary_numeric(self, rng):
        Y = (rng.random(40) < 0.5).astype(float)
        ctx = make_distillation(Y, rng.standard_normal((40, 3)), "forest-regression", rng)
        assert np.all(np.isfinite(ctx.residual))

    def test_binomial_distiller_needs_binary(self, rng):
        with pytest.raises(DomainError):
            make_distillation(rng.standard_normal(10), rng.standard_normal((10, 2)),
                              "lasso-binomial", rng)

    def test_context_reused_bit_equal(self, rng):
        n = 40
        Y, X_S = rng.standard_normal(n), rng.standard_normal((n, 5))
        bound = prepare("GLM-L1-D", Y, X_S, rng=1)
        before = bound.context.predictor.copy()
        bound.evaluate(rng.standard_normal((n, 2)), None)
        bound.evaluate(rng.standard_normal((n, 2)), None)
        assert np.array_equal(bound.context.predictor, before)

    def test_residualized_ssr_oracle(self, four_point):
        _, X = four_point
        r = np.array([0.2, -0.1, -0.4, 0.3])
        ctx = DistillationContext(np.zeros(4), r, np.zeros(4), "lasso-gaussian")
        assert stat_residualized(ctx, X, "LM-L1-R-SSR") == pytest.approx(-ne_ssr(r, X), abs=1e-12)

    def test_residualized_sst_degenerate(self, four_point):
        _, X = four_point
        ctx = DistillationContext(np.zeros(4), np.zeros(4), np.zeros(4), "lasso-gaussian")
        with pytest.raises(DegenerateFitError):
            stat_residualized(ctx, X, "GLM-L1-R-SST")

    def test_rf_rr_on_binary_response(self, rng):
        Y = (rng.random(40) < 0.5).astype(float)
        v = prepare("RF-RR", Y, rng.standard_normal((40, 3)), rng=1, trees=30).evaluate(
            rng.standard_normal((40, 2)), np.random.default_rng(2)
        )
        assert np.isfinite(v)

    def test_augmented_perfect_fit(self):
        Y = np.arange(6.0) ** 1.5
        ctx = DistillationContext(np.ones(6), Y - 1, np.ones(6), "lasso-gaussian")
        with pytest.warns(RankWarning):
            v = stat_augmented(ctx, Y, Y[:, None], "GLM-L1-D")
        assert v == pytest.approx(0.0, abs=1e-20)

    def test_rf_d_empty_tested(self, rng):
        ctx = DistillationContext(np.zeros(10), np.zeros(10), rng.standard_normal(10),
                                  "forest-regression")
        assert stat_augmented(ctx, rng.standard_normal(10), np.zeros((10, 0)), "RF-D") == 0.0

    def test_augmented_null_exchangeable(self):
        t0, t1 = [], []
        for seed in range(200):
            r = np.random.default_rng(seed)
            X = r.standard_normal((40, 8))
            Y = X[:, 3:] @ np.full(5, 0.5) + r.standard_normal(40)
            bound = prepare("GLM-L1-D", Y, X[:, 3:], rng=seed)
            copy = mvn_crt_copies(X, [0, 1, 2], M=1, rng=seed).copies[0]
            t0.append(bound.evaluate(X[:, :3], None))
            t1.append(bound.evaluate(copy, None))
        assert sps.ks_2samp(t0, t1).pvalue > 0.001


class TestForestStatistic:
    def test_empty_tested(self, rng):
        assert stat_rf(rng.standard_normal(10), np.zeros((10, 0)), rng.standard_normal((10, 2))) == 0.0

    def test_null_centered(self):
        vals = []
        for seed in range(50):
            r = np.random.default_rng(seed)
            vals.append(stat_rf(r.standard_normal(60), r.standard_normal((60, 2)),
                                r.standard_normal((60, 2)), rng=seed, trees=50))
        vals = np.array(vals)
        assert abs(vals.mean()) <= 3 * vals.std(ddof=1) / np.sqrt(len(vals))

    def test_signal_positive(self):
        pos = 0
        for seed in range(20):
            r = np.random.default_rng(seed)
            X_T = r.standard_normal((80, 2))
            pos += stat_rf(X_T[:, 0], X_T, r.standard_normal((80, 2)), rng=seed, trees=50) > 0
        assert pos >= 19


class TestRegistry:
    def test_case_insensitive(self):
        assert canonical_kind("lm-l1-r-ssr") == "LM-L1-R-SSR"
        assert set(KINDS) == {
            "LM-SST", "LM-SSR", "GLM-Dev", "MaxCor", "RF", "GLM-L1-D", "RF-D",
            "GLM-L1-R-SST", "LM-L1-R-SSR", "RF-RR", "T-dense", "T-sparse",
        }

    def test_unknown(self):
        with pytest.raises(DomainError):
            canonical_kind("nope")

    def test_feasibility_gate(self):
        check_feasible("LM-SST", 30, 8, 20)
        with pytest.raises(FeasibilityError):
            check_feasible("LM-SST", 29, 8, 20)
        check_feasible("LM-L1-R-SSR", 80, 8, 112)
        with pytest.raises(FeasibilityError):
            check_feasible("T-sparse", 80, 8, 112)
