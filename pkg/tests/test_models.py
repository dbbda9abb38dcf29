"""Linear and boosted-tree forward models, residual stats, serialization."""

import numpy as np
import pytest

from devexplain.dataset import Dataset
from devexplain.errors import NumericalError, SingularFitError, ValidationError
from devexplain.models import (
    GbtModel,
    GbtParams,
    clamp_sigma_e_squared,
    fit_gbt,
    fit_linear,
    model_from_json,
    model_to_json,
    predict,
    predict_batch,
    residual_stats,
)


def linear_data(n: int = 50, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 2, size=(n, 2))
    y = 2.0 * x[:, 0] - x[:, 1] + 3.0
    return Dataset(features=x, labels=y, feature_names=("x0", "x1"))


class TestFitLinear:
    def test_exact_recovery(self):
        model = fit_linear(linear_data())
        assert model.intercept == pytest.approx(3.0, abs=1e-8)
        assert model.coefficients == pytest.approx([2.0, -1.0], abs=1e-8)

    def test_benchmark_unit_coefficients(self, linear_outlier):
        assert np.all(np.abs(linear_outlier.coefficients - 1.0) <= 0.02)
        assert abs(linear_outlier.intercept) <= 0.05

    def test_duplicate_column_names_culprit(self):
        rng = np.random.default_rng(1)
        col = rng.normal(size=40)
        data = Dataset(
            features=np.column_stack([col, col]),
            labels=rng.normal(size=40),
            feature_names=("a", "b"),
        )
        with pytest.raises(SingularFitError) as info:
            fit_linear(data)
        assert info.value.column == "b"

    def test_constant_column_collides_with_intercept(self):
        rng = np.random.default_rng(2)
        data = Dataset(
            features=np.column_stack([np.full(30, 7.0), rng.normal(size=30)]),
            labels=rng.normal(size=30),
            feature_names=("const", "x"),
        )
        with pytest.raises(SingularFitError) as info:
            fit_linear(data)
        assert info.value.column == "const"

    def test_needs_enough_rows(self):
        data = Dataset(
            features=[[1.0, 2.0], [3.0, 4.0]],
            labels=[1.0, 2.0],
            feature_names=("a", "b"),
        )
        with pytest.raises(ValidationError):
            fit_linear(data)

    def test_residual_orthogonality(self, synth10k):
        model = fit_linear(synth10k)
        resid = synth10k.labels - model.predict_batch(synth10k.features)
        # least squares leaves residuals orthogonal to every design column
        assert abs(resid.sum()) <= 1e-6 * synth10k.n
        assert np.all(np.abs(synth10k.features.T @ resid) <= 1e-5 * synth10k.n)


class TestPredict:
    def test_linear_point(self):
        model = fit_linear(linear_data())
        assert predict(model, [1.0, 1.0]) == pytest.approx(4.0, abs=1e-8)

    def test_benchmark_point_value(self, linear_outlier):
        value = predict(linear_outlier, [7.97, 7.94, -0.11])
        assert value == pytest.approx(15.8, abs=0.05)

    def test_zero_tree_model_returns_base_score(self):
        data = linear_data(30, 3)
        model = fit_gbt(data, GbtParams(n_trees=0))
        assert predict(model, [5.0, -5.0]) == data.labels.mean()

    def test_scalar_and_batch_paths_agree_bitwise(self, gbt10k):
        rng = np.random.default_rng(4)
        xs = rng.normal(4, 3, size=(100, 3))
        batch = predict_batch(gbt10k, xs)
        singles = np.array([predict(gbt10k, x) for x in xs])
        assert np.array_equal(batch, singles)

    def test_input_validation(self, linear_outlier):
        with pytest.raises(ValidationError):
            predict(linear_outlier, [1.0, 2.0])
        with pytest.raises(ValidationError):
            predict(linear_outlier, [1.0, np.nan, 2.0])
        with pytest.raises(ValidationError):
            predict_batch(linear_outlier, np.ones((5, 2)))


class TestFitGbt:
    def test_single_stump_fits_step(self):
        x = np.linspace(-1, 1, 40).reshape(-1, 1)
        y = (x[:, 0] >= 0).astype(float)
        data = Dataset(features=x, labels=y, feature_names=("x",))
        model = fit_gbt(data, GbtParams(n_trees=1, max_depth=1, learning_rate=1.0))
        assert np.allclose(model.predict_batch(x), y)

    def test_benchmark_train_r2(self, synth10k, gbt10k):
        stats = residual_stats(gbt10k, synth10k)
        assert stats.r_squared_train >= 0.95

    def test_sse_non_increasing_in_trees(self, synth10k, gbt10k):
        # prefix models share the fitted trees, so SSE must fall monotonically
        sse = []
        for m in (1, 10, 50, 200):
            prefix = GbtModel(
                trees=gbt10k.trees[:m],
                learning_rate=gbt10k.learning_rate,
                base_score=gbt10k.base_score,
                n_features=gbt10k.n_features,
            )
            resid = synth10k.labels - prefix.predict_batch(synth10k.features)
            sse.append(float(resid @ resid))
        assert all(b <= a for a, b in zip(sse, sse[1:]))

    def test_depth_cap(self, synth10k):
        model = fit_gbt(synth10k, GbtParams(n_trees=5, max_depth=2))
        assert all(tree.depth() <= 2 for tree in model.trees)

    def test_min_samples_leaf_limits_depth(self):
        data = linear_data(20, 5)
        # a 10-per-side floor allows the root split but nothing below it
        model = fit_gbt(data, GbtParams(n_trees=3, min_samples_leaf=10))
        assert all(tree.depth() <= 1 for tree in model.trees)

    def test_too_few_rows_for_leaf_floor(self):
        data = linear_data(20, 5)
        with pytest.raises(ValidationError):
            fit_gbt(data, GbtParams(n_trees=3, min_samples_leaf=20))

    def test_tie_breaks_to_lowest_feature(self):
        rng = np.random.default_rng(6)
        col = rng.normal(size=50)
        y = np.where(col > 0, 1.0, -1.0)
        data = Dataset(
            features=np.column_stack([col, col]),
            labels=y,
            feature_names=("a", "b"),
        )
        model = fit_gbt(data, GbtParams(n_trees=1, max_depth=1))
        assert model.trees[0].feature[0] == 0

    def test_needs_enough_rows(self):
        data = Dataset(features=[[1.0]], labels=[1.0], feature_names=("a",))
        with pytest.raises(ValidationError):
            fit_gbt(data, GbtParams(min_samples_leaf=1))

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_trees": -1},
            {"n_trees": 1, "max_depth": 0},
            {"learning_rate": 0.0},
            {"min_samples_leaf": 0},
        ],
    )
    def test_param_validation(self, kwargs):
        with pytest.raises(ValidationError):
            GbtParams(**kwargs)


class TestResidualStats:
    def test_perfect_fit(self):
        data = linear_data()
        model = fit_linear(data)
        stats = residual_stats(model, data)
        assert stats.sigma_e_squared <= 1e-16
        assert stats.r_squared_train == pytest.approx(1.0, abs=1e-12)

    def test_constant_model_on_two_labels(self):
        data = Dataset(
            features=[[0.0], [1.0]], labels=[0.0, 2.0], feature_names=("a",)
        )
        model = fit_gbt(data, GbtParams(n_trees=0))
        stats = residual_stats(model, data)
        assert stats.sigma_e_squared == 1.0
        assert stats.r_squared_train == 0.0

    def test_test_split_reported(self, synth10k, linear_outlier):
        stats = residual_stats(linear_outlier, synth10k, synth10k)
        assert stats.r_squared_test == pytest.approx(stats.r_squared_train)

    def test_zero_variance_labels(self):
        data = Dataset(
            features=[[0.0], [1.0]], labels=[3.0, 3.0], feature_names=("a",)
        )
        model = fit_gbt(data, GbtParams(n_trees=0))
        with pytest.raises(NumericalError):
            residual_stats(model, data)


class TestClampSigma:
    def test_passthrough_above_floor(self):
        labels = np.array([0.0, 1.0, 2.0])
        assert clamp_sigma_e_squared(0.5, labels) == 0.5

    def test_perfect_fit_clamped(self):
        labels = np.array([0.0, 1.0, 2.0])
        expected = 1e-12 * labels.var()
        assert clamp_sigma_e_squared(0.0, labels) == expected

    def test_zero_variance_labels_rejected(self):
        with pytest.raises(NumericalError):
            clamp_sigma_e_squared(0.0, np.ones(5))


class TestModelJson:
    def test_linear_roundtrip(self, linear_outlier):
        again = model_from_json(model_to_json(linear_outlier))
        assert again.intercept == linear_outlier.intercept
        assert np.array_equal(again.coefficients, linear_outlier.coefficients)

    def test_gbt_roundtrip_preserves_predictions(self, gbt10k, synth10k):
        again = model_from_json(model_to_json(gbt10k))
        xs = synth10k.features[:200]
        assert np.array_equal(again.predict_batch(xs), gbt10k.predict_batch(xs))

    def test_leaf_thresholds_serialize_as_null(self, gbt10k):
        doc = model_to_json(gbt10k)
        tree0 = doc["trees"][0]
        for feat, thr in zip(tree0["feature"], tree0["threshold"]):
            assert (feat == -1) == (thr is None)

    def test_schema_guard(self):
        with pytest.raises(ValidationError):
            model_from_json({"schema": 99, "kind": "linear"})

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            model_from_json({"schema": 1, "kind": "forest"})
