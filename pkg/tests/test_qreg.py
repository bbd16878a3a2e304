"""Feature engineering and check-loss quantile fitting."""

from __future__ import annotations

import numpy as np
import pytest

from crisishedge import months as mo
from crisishedge.errors import (
    ConfigError,
    DataError,
    DegenerateSampleError,
    EndogeneityError,
)
from crisishedge.qreg import (
    INTERCEPT_LABEL,
    TARGET_COLUMN,
    DesignMatrix,
    FeatureSchema,
    QuantileModel,
    check_loss,
    engineer_features,
    expanding_window_cv,
    fit_quantile,
    lag_column_name,
    predict,
    pseudo_r2,
)

from conftest import make_series


def dm(values, target, columns=None, start="2015-01", **kwargs) -> DesignMatrix:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n = values.shape[0]
    months = tuple(mo.month_range(start, mo.shift_month(start, n - 1)))
    if columns is None:
        columns = tuple(f"x{j}" for j in range(values.shape[1]))
    return DesignMatrix(
        months=months,
        columns=tuple(columns),
        values=values,
        target=np.asarray(target, dtype=float),
        **kwargs,
    )


def intercept_only(target, start="2015-01") -> DesignMatrix:
    target = np.asarray(target, dtype=float)
    return dm(np.empty((len(target), 0)), target, columns=(), start=start)


def objective_at(X: DesignMatrix, tau: float, intercept: float, coef: np.ndarray) -> float:
    residual = X.target - (intercept + X.values @ coef)
    return float(np.sum(check_loss(residual, tau)))


def packed_coefficients(model: QuantileModel, X: DesignMatrix) -> np.ndarray:
    parts = [model.betas[c] for c in X.columns[: X.n_linear]]
    parts += [model.gammas[p] for p in X.interaction_pairs]
    return np.array(parts, dtype=float)


def assert_first_order_optimal(model: QuantileModel, X: DesignMatrix) -> None:
    base = objective_at(X, model.tau, model.intercept, packed_coefficients(model, X))
    coef = packed_coefficients(model, X)
    for delta in (1e-4, -1e-4):
        assert objective_at(X, model.tau, model.intercept + delta, coef) >= base - 1e-8
        for j in range(len(coef)):
            bumped = coef.copy()
            bumped[j] += delta
            assert objective_at(X, model.tau, model.intercept, bumped) >= base - 1e-8


class TestCheckLoss:
    def test_positive_residual(self):
        assert check_loss(1.0, 0.9) == pytest.approx(0.9)

    def test_negative_residual(self):
        assert check_loss(-1.0, 0.9) == pytest.approx(0.1)

    @pytest.mark.parametrize("tau", [0.08, 0.5, 0.92])
    def test_zero_residual(self, tau):
        assert check_loss(0.0, tau) == 0.0

    def test_vectorized_and_nonnegative(self):
        rng = np.random.default_rng(0)
        u = rng.normal(size=500)
        out = check_loss(u, 0.3)
        assert out.shape == u.shape
        assert np.all(out >= 0.0)
        assert out[0] == pytest.approx(check_loss(float(u[0]), 0.3))

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.1, 1.5])
    def test_tau_domain(self, tau):
        with pytest.raises(ValueError):
            check_loss(1.0, tau)


class TestLagColumnName:
    def test_zero_lag_is_bare_name(self):
        assert lag_column_name("policy_rate", 0) == "policy_rate"

    def test_positive_lag_suffix(self):
        assert lag_column_name("m2_growth", 3) == "m2_growth_lag3"


class TestFeatureSchema:
    def test_linear_columns_ordered(self):
        schema = FeatureSchema(
            base_features=("a", "b"),
            lag_spec={"b": (1, 3)},
            event_dummies={"d": (0, 1)},
        )
        assert schema.linear_columns() == ("a", "b_lag1", "b_lag3", "d", "d_lag1")
        assert schema.dummy_columns() == frozenset({"d", "d_lag1"})

    def test_interaction_names(self):
        schema = FeatureSchema(
            base_features=("a", "b"),
            interaction_pairs=(("a", "b"),),
        )
        assert schema.interaction_names() == ("a*b",)

    def test_equity_prefix_rejected_everywhere(self):
        with pytest.raises(EndogeneityError, match="equity"):
            FeatureSchema(base_features=("equity_return_lag1",))
        with pytest.raises(EndogeneityError):
            FeatureSchema(base_features=("a",), event_dummies={"equity_dummy": (0,)})
        with pytest.raises(EndogeneityError):
            FeatureSchema(
                base_features=("a", "b"),
                interaction_pairs=(("a", "equity_x"),),
            )

    def test_excluded_identifier_rejected(self):
        with pytest.raises(ConfigError):
            FeatureSchema(base_features=("a",), excluded=("a",))

    def test_lag_spec_must_name_base_feature(self):
        with pytest.raises(ConfigError):
            FeatureSchema(base_features=("a",), lag_spec={"b": (1,)})

    def test_negative_lag_rejected(self):
        with pytest.raises(ConfigError):
            FeatureSchema(base_features=("a",), lag_spec={"a": (-1,)})

    def test_duplicate_columns_rejected(self):
        with pytest.raises(ConfigError):
            FeatureSchema(base_features=("a", "a"))

    def test_interaction_must_reference_generated_column(self):
        with pytest.raises(ConfigError):
            FeatureSchema(base_features=("a",), interaction_pairs=(("a", "missing"),))

    def test_duplicate_interaction_pairs_rejected(self):
        with pytest.raises(ConfigError):
            FeatureSchema(
                base_features=("a", "b"),
                interaction_pairs=(("a", "b"), ("a", "b")),
            )


class TestDesignMatrixValidation:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            DesignMatrix(
                months=("2020-01", "2020-02"),
                columns=("x",),
                values=np.zeros((3, 1)),
                target=np.zeros(2),
            )

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            dm([1.0, np.nan, 2.0], [0.0, 0.0, 0.0])

    def test_equity_column_unreachable(self):
        with pytest.raises(EndogeneityError):
            dm(np.zeros((3, 1)), np.zeros(3), columns=("equity_momentum",))


class TestEngineerFeatures:
    def panel(self, n=24, start="2020-01"):
        months = list(mo.month_range(start, mo.shift_month(start, n - 1)))
        rng = np.random.default_rng(7)
        return {
            TARGET_COLUMN: make_series(TARGET_COLUMN, rng.normal(0.01, 0.05, n), start=start),
            "policy_rate": make_series("policy_rate", rng.normal(0.1, 0.02, n), start=start),
            "m2_growth": make_series("m2_growth", rng.normal(0.01, 0.01, n), start=start),
            "regime_break": make_series(
                "regime_break", [1.0 if 8 <= i <= 10 else 0.0 for i in range(n)], start=start
            ),
        }, months

    def test_lag_one_drops_first_row(self):
        # Four target months, feature values 1..4: the lag-1 column should read
        # [1, 2, 3] for Feb..Apr and the Jan row has no history so it drops.
        panel = {
            TARGET_COLUMN: make_series(TARGET_COLUMN, [0.1, 0.2, 0.3, 0.4], start="2020-01"),
            "f": make_series("f", [1.0, 2.0, 3.0, 4.0], start="2020-01"),
        }
        schema = FeatureSchema(base_features=("f",), lag_spec={"f": (1,)})
        X = engineer_features(panel, schema)
        assert X.months == ("2020-02", "2020-03", "2020-04")
        assert X.dropped_rows == 1
        np.testing.assert_allclose(X.raw_linear[:, 0], [1.0, 2.0, 3.0])

    def test_lag_reads_history_instead_of_shifting(self):
        # Feature history extends one month before the first target month, so
        # no row is dropped and the lag-1 column starts at the earlier value.
        panel = {
            TARGET_COLUMN: make_series(TARGET_COLUMN, [0.1, 0.2, 0.3], start="2020-02"),
            "f": make_series("f", [10.0, 20.0, 30.0, 40.0], start="2020-01"),
        }
        schema = FeatureSchema(base_features=("f",), lag_spec={"f": (1,)})
        X = engineer_features(panel, schema)
        assert X.months == ("2020-02", "2020-03", "2020-04")
        assert X.dropped_rows == 0
        np.testing.assert_allclose(X.raw_linear[:, 0], [10.0, 20.0, 30.0])

    def test_continuous_columns_standardized(self):
        panel, _ = self.panel()
        schema = FeatureSchema(base_features=("policy_rate", "m2_growth"))
        X = engineer_features(panel, schema)
        np.testing.assert_allclose(X.values.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(X.values.std(axis=0), 1.0, atol=1e-12)

    def test_dummies_pass_through_unscaled(self):
        panel, _ = self.panel()
        schema = FeatureSchema(
            base_features=("policy_rate",), event_dummies={"regime_break": (0, 1)}
        )
        X = engineer_features(panel, schema)
        j = X.columns.index("regime_break")
        assert set(np.unique(X.values[:, j])) <= {0.0, 1.0}
        raw = [panel["regime_break"].as_dict()[m] for m in X.months]
        np.testing.assert_array_equal(X.values[:, j], raw)

    def test_interaction_is_product_of_standardized_parents(self):
        panel = {
            TARGET_COLUMN: make_series(TARGET_COLUMN, [0.1, 0.2, 0.3, 0.4], start="2020-01"),
            "a": make_series("a", [2.0, 0.0, 2.0, 0.0], start="2020-01"),
            "b": make_series("b", [3.0, 3.0, 1.0, 1.0], start="2020-01"),
        }
        schema = FeatureSchema(base_features=("a", "b"), interaction_pairs=(("a", "b"),))
        X = engineer_features(panel, schema)
        ja, jb = X.columns.index("a"), X.columns.index("b")
        np.testing.assert_allclose(X.values[:, ja], [1.0, -1.0, 1.0, -1.0])
        np.testing.assert_allclose(X.values[:, jb], [1.0, 1.0, -1.0, -1.0])
        np.testing.assert_allclose(X.values[:, X.columns.index("a*b")], [1.0, -1.0, -1.0, 1.0])

    def test_gap_in_feature_drops_row_and_counts(self):
        from crisishedge.dataio import MacroSeries

        panel, months = self.panel()
        obs = tuple(o for o in panel["policy_rate"].observations if o[0] != months[5])
        panel["policy_rate"] = MacroSeries(name="policy_rate", observations=obs)
        schema = FeatureSchema(base_features=("policy_rate",))
        X = engineer_features(panel, schema)
        assert months[5] not in X.months
        assert X.dropped_rows == 1

    def test_window_filters_target_months(self):
        panel, months = self.panel()
        schema = FeatureSchema(base_features=("policy_rate",))
        X = engineer_features(panel, schema, window=(months[6], months[11]))
        assert X.months == tuple(months[6:12])

    def test_missing_target_raises(self):
        panel, _ = self.panel()
        del panel[TARGET_COLUMN]
        with pytest.raises(DataError, match=TARGET_COLUMN):
            engineer_features(panel, FeatureSchema(base_features=("policy_rate",)))

    def test_absent_feature_raises(self):
        panel, _ = self.panel()
        with pytest.raises(DataError, match="oil_price"):
            engineer_features(panel, FeatureSchema(base_features=("oil_price",)))

    def test_non_binary_dummy_raises(self):
        panel, _ = self.panel()
        schema = FeatureSchema(
            base_features=("policy_rate",), event_dummies={"m2_growth": (0,)}
        )
        with pytest.raises(DataError, match="m2_growth"):
            engineer_features(panel, schema)

    def test_empty_window_raises(self):
        panel, _ = self.panel()
        schema = FeatureSchema(base_features=("policy_rate",))
        with pytest.raises(DataError):
            engineer_features(panel, schema, window=("2030-01", "2030-06"))


class TestFitQuantile:
    def test_intercept_only_median_is_lower_order_statistic(self):
        X = intercept_only(np.arange(1.0, 11.0))
        model = fit_quantile(X, 0.5)
        assert model.intercept == pytest.approx(5.0, abs=1e-12)

    def test_intercept_only_low_tail(self):
        X = intercept_only(np.arange(1.0, 11.0))
        model = fit_quantile(X, 0.08)
        assert model.intercept == pytest.approx(1.0, abs=1e-12)

    def test_intercept_only_matches_sorted_sample(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            n = int(rng.integers(10, 120))
            y = rng.normal(size=n)
            tau = float(rng.choice([0.08, 0.25, 0.5, 0.92]))
            model = fit_quantile(intercept_only(y), tau)
            k = int(np.ceil(tau * n - 1e-9))
            assert model.intercept == pytest.approx(np.sort(y)[k - 1], abs=1e-8)

    def test_intercept_monotone_in_tau(self):
        rng = np.random.default_rng(22)
        y = rng.normal(size=80)
        X = intercept_only(y)
        fitted = [fit_quantile(X, t).intercept for t in (0.08, 0.5, 0.92)]
        assert fitted == sorted(fitted)

    @pytest.mark.parametrize("tau", [0.1, 0.5, 0.9])
    def test_exact_linear_fit(self, tau):
        rng = np.random.default_rng(23)
        x = rng.normal(size=40)
        X = dm(x, 2.0 * x, columns=("x",))
        model = fit_quantile(X, tau)
        assert model.betas["x"] == pytest.approx(2.0, abs=1e-8)
        assert model.intercept == pytest.approx(0.0, abs=1e-8)
        assert model.objective_value == pytest.approx(0.0, abs=1e-9)

    def test_first_order_optimality_with_interactions(self):
        rng = np.random.default_rng(24)
        n = 60
        a = rng.normal(size=n)
        b = rng.normal(size=n)
        values = np.column_stack([a, b, a * b])
        y = 0.3 + 1.2 * a - 0.7 * b + 0.5 * a * b + rng.normal(0, 0.4, n)
        X = dm(values, y, columns=("a", "b", "a*b"), interaction_pairs=(("a", "b"),))
        for tau in (0.08, 0.5, 0.92):
            model = fit_quantile(X, tau)
            assert_first_order_optimal(model, X)

    def test_equivariance_under_target_scaling(self):
        rng = np.random.default_rng(25)
        x = rng.normal(size=50)
        y = 1.0 + 0.8 * x + rng.normal(0, 0.3, 50)
        X = dm(x, y, columns=("x",))
        scaled = dm(x, 3.5 * y, columns=("x",))
        m1 = fit_quantile(X, 0.3)
        m2 = fit_quantile(scaled, 0.3)
        assert m2.intercept == pytest.approx(3.5 * m1.intercept, rel=1e-7, abs=1e-9)
        assert m2.betas["x"] == pytest.approx(3.5 * m1.betas["x"], rel=1e-7, abs=1e-9)
        assert m2.objective_value == pytest.approx(3.5 * m1.objective_value, rel=1e-7)

    def test_zero_variance_column_dropped_with_zero_coefficient(self):
        rng = np.random.default_rng(26)
        x = rng.normal(size=30)
        values = np.column_stack([x, np.full(30, 2.0)])
        X = dm(values, 1.0 + x, columns=("x", "flat"))
        model = fit_quantile(X, 0.5)
        assert model.betas["flat"] == 0.0
        assert model.betas["x"] == pytest.approx(1.0, abs=1e-8)

    def test_constant_target_degenerate(self):
        with pytest.raises(DegenerateSampleError):
            fit_quantile(intercept_only(np.full(20, 3.0)), 0.5)

    def test_too_few_rows(self):
        with pytest.raises(DataError):
            fit_quantile(intercept_only(np.arange(9.0)), 0.5)

    @pytest.mark.parametrize("tau", [0.0, 1.0])
    def test_tau_domain(self, tau):
        with pytest.raises(ValueError):
            fit_quantile(intercept_only(np.arange(10.0)), tau)

    def test_gamma_for_undeclared_pair_rejected(self):
        schema = FeatureSchema(base_features=("a", "b"), interaction_pairs=(("a", "b"),))
        with pytest.raises(ValueError):
            QuantileModel(
                tau=0.5,
                intercept=0.0,
                betas={"a": 1.0, "b": 0.0},
                gammas={("a", "c"): 1.0},
                objective_value=0.0,
                columns=("a", "b"),
                schema=schema,
            )


class TestPredict:
    def test_matches_manual_evaluation(self):
        rng = np.random.default_rng(27)
        x = rng.normal(size=30)
        X = dm(x, 0.5 + 2.0 * x + rng.normal(0, 0.1, 30), columns=("x",))
        model = fit_quantile(X, 0.5)
        np.testing.assert_allclose(
            predict(model, X), model.intercept + model.betas["x"] * X.values[:, 0]
        )

    def test_missing_column_raises(self):
        rng = np.random.default_rng(28)
        x = rng.normal(size=30)
        model = fit_quantile(dm(x, x, columns=("x",)), 0.5)
        other = dm(x, x, columns=("z",))
        with pytest.raises(DataError):
            predict(model, other)


class TestPseudoR2:
    def test_intercept_only_in_sample_is_zero(self):
        y = np.arange(1.0, 21.0)
        X = intercept_only(y)
        model = fit_quantile(X, 0.5)
        assert pseudo_r2(model, X) == pytest.approx(0.0, abs=1e-12)

    def test_exact_fit_is_one(self):
        rng = np.random.default_rng(29)
        x = rng.normal(size=30)
        X = dm(x, 2.0 * x, columns=("x",))
        model = fit_quantile(X, 0.5)
        assert pseudo_r2(model, X) == pytest.approx(1.0, abs=1e-9)

    def test_in_sample_bounded(self):
        rng = np.random.default_rng(30)
        x = rng.normal(size=60)
        y = 0.5 * x + rng.normal(0, 1.0, 60)
        X = dm(x, y, columns=("x",))
        for tau in (0.08, 0.5, 0.92):
            model = fit_quantile(X, tau)
            assert 0.0 <= pseudo_r2(model, X) <= 1.0

    def test_reversed_trend_goes_negative(self):
        t = np.linspace(0.0, 1.0, 40)
        train = dm(t, 2.0 * t, columns=("x",))
        model = fit_quantile(train, 0.5)
        held_out = dm(t, -2.0 * t, columns=("x",))
        assert pseudo_r2(model, held_out) < 0.0

    def test_constant_target_raises(self):
        rng = np.random.default_rng(31)
        x = rng.normal(size=20)
        model = fit_quantile(dm(x, x, columns=("x",)), 0.5)
        flat = dm(x, np.zeros(20), columns=("x",))
        with pytest.raises(DegenerateSampleError):
            pseudo_r2(model, flat)


def noise_matrix(n: int, seed: int, p: int = 2) -> DesignMatrix:
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(n, p))
    target = rng.normal(size=n)
    return dm(values, target)


class TestExpandingWindowCV:
    def test_fold_arithmetic_30_20_5(self):
        X = noise_matrix(30, seed=40)
        report = expanding_window_cv(X, 0.5, initial_window=20, step=5)
        assert len(report.folds) == 2
        assert report.folds[0].train_rows == 20
        assert report.folds[0].test_months == (X.months[20], X.months[24])
        assert report.folds[1].train_rows == 25
        assert report.folds[1].test_months == (X.months[25], X.months[29])

    def test_final_fold_may_be_short(self):
        X = noise_matrix(28, seed=41)
        report = expanding_window_cv(X, 0.5, initial_window=20, step=5)
        assert [f.n_test for f in report.folds] == [5, 3]

    def test_no_test_row_precedes_training(self):
        X = noise_matrix(60, seed=42)
        report = expanding_window_cv(X, 0.5, initial_window=20, step=10)
        for fold in report.folds:
            last_train = X.months[fold.train_rows - 1]
            assert mo.month_index(fold.test_months[0]) > mo.month_index(last_train)

    def test_white_noise_pooled_r2_small(self):
        X = noise_matrix(120, seed=43)
        report = expanding_window_cv(X, 0.5, initial_window=36, step=12)
        assert report.pooled_pseudo_r2 <= 0.05

    def test_coefficient_paths_cover_all_terms(self):
        X = noise_matrix(40, seed=44)
        report = expanding_window_cv(X, 0.5, initial_window=20, step=10)
        assert set(report.coefficient_paths) == {INTERCEPT_LABEL, *X.columns}
        for path in report.coefficient_paths.values():
            assert len(path) == len(report.folds)

    def test_force_test_month_shrinks_initial_window(self):
        X = noise_matrix(30, seed=45)
        forced = X.months[15]
        report = expanding_window_cv(
            X, 0.5, initial_window=20, step=5, force_test_month=forced
        )
        assert report.folds[0].train_rows == 15
        assert report.folds[0].test_months[0] == forced

    def test_force_test_month_too_early(self):
        X = noise_matrix(30, seed=46)
        with pytest.raises(DataError):
            expanding_window_cv(
                X, 0.5, initial_window=20, step=5, force_test_month=X.months[5]
            )

    def test_force_test_month_unknown(self):
        X = noise_matrix(30, seed=47)
        with pytest.raises(DataError):
            expanding_window_cv(
                X, 0.5, initial_window=20, step=5, force_test_month="1999-01"
            )

    def test_insufficient_rows_for_two_folds(self):
        X = noise_matrix(22, seed=48)
        with pytest.raises(DataError):
            expanding_window_cv(X, 0.5, initial_window=20, step=5)

    def test_initial_window_floor(self):
        X = noise_matrix(30, seed=49)
        with pytest.raises(DataError):
            expanding_window_cv(X, 0.5, initial_window=9, step=5)

    def test_step_floor(self):
        X = noise_matrix(30, seed=50)
        with pytest.raises(DataError):
            expanding_window_cv(X, 0.5, initial_window=20, step=0)

    def test_pooled_mae_matches_fold_errors(self):
        X = noise_matrix(40, seed=51)
        report = expanding_window_cv(X, 0.5, initial_window=20, step=10)
        weighted = sum(f.mae * f.n_test for f in report.folds)
        total = sum(f.n_test for f in report.folds)
        assert report.pooled_mae == pytest.approx(weighted / total)
