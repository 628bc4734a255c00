import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from hiercal.calibration import (
    FitDivergenceError,
    PosteriorEstimator,
    constant_estimator_bias,
    evaluate_estimator,
    fit_estimators,
    fit_logistic,
    logistic_loss_grad,
    read_model,
    write_model,
)
from hiercal.compression import fit_compressor, softmax
from hiercal.dataset import LogitDataset, SyntheticConfig, generate_synthetic

from conftest import constant_model, gradient_descent_logistic


def _estimator(w, b):
    return PosteriorEstimator(0, 0, np.asarray(w, dtype=float), float(b))


class TestEvaluateEstimator:
    def test_zero_parameters_give_half(self):
        est = _estimator([0.0, 0.0], 0.0)
        for z in ([0.0, 0.0], [5.0, -3.0], [100.0, 100.0]):
            assert evaluate_estimator(est, z) == 0.5

    def test_saturation_limits(self):
        est = _estimator([1.0], 0.0)
        assert evaluate_estimator(est, [60.0]) == pytest.approx(1.0)
        assert evaluate_estimator(est, [-60.0]) == pytest.approx(0.0, abs=1e-15)

    def test_bias_sign_convention(self):
        # argument is w.z - b, so w=[1], b=1, z=[1] sits at sigmoid(0)
        assert evaluate_estimator(_estimator([1.0], 1.0), [1.0]) == 0.5

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            evaluate_estimator(_estimator([1.0, 2.0], 0.0), [1.0])


class TestFitLogistic:
    def test_matches_gradient_descent_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            Z = rng.normal(size=(60, 2))
            true_w = rng.normal(size=2)
            p = 1.0 / (1.0 + np.exp(-(Z @ true_w)))
            t = (rng.uniform(size=60) < p).astype(float)
            if t.min() == t.max():
                continue
            w, b = fit_logistic(Z, t)
            w_ref, b_ref = gradient_descent_logistic(Z, t)
            gap = np.max(np.abs(np.append(w - w_ref, b - b_ref)))
            assert gap < 1e-3

    def test_separable_data_stays_finite(self):
        Z = np.linspace(-1, 1, 20).reshape(-1, 1)
        t = (Z[:, 0] > 0).astype(float)
        w, b = fit_logistic(Z, t)
        assert np.all(np.isfinite(w)) and math.isfinite(b)
        pred = (1.0 / (1.0 + np.exp(-(Z @ w - b))) > 0.5).astype(float)
        assert np.mean(pred == t) == 1.0

    def test_loss_not_worse_than_zero_parameters(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            Z = rng.normal(size=(30, 3))
            t = rng.integers(0, 2, size=30).astype(float)
            if t.min() == t.max():
                continue
            w, b = fit_logistic(Z, t)
            at_fit, _ = logistic_loss_grad(np.append(w, b), Z, t)
            at_zero, _ = logistic_loss_grad(np.zeros(4), Z, t)
            assert at_fit <= at_zero + 1e-12

    def test_divergence_reported(self):
        Z = np.array([[1e308], [-1e308]])
        t = np.array([1.0, 0.0])
        with np.errstate(all="ignore"), pytest.raises(FitDivergenceError):
            fit_logistic(Z, t)


class TestConstantEstimators:
    def test_add_one_smoothing(self):
        # all-negative subset of size 8 predicts 1/10
        b = constant_estimator_bias(0, 8)
        assert 1.0 / (1.0 + math.exp(b)) == pytest.approx(1.0 / 10.0)

    def test_grid_uses_smoothed_constant(self):
        # every record argmax-predicts label 0 and is truly label 0, so
        # target j=1 never appears in the subset
        logits = np.column_stack([np.full(6, 3.0), np.zeros(6)])
        ds = LogitDataset(("a", "b"), logits, np.zeros(6, dtype=int))
        model = fit_estimators(ds, fit_compressor("none", ds))
        absent = model.estimator(0, 1)
        np.testing.assert_array_equal(absent.weights, 0.0)
        z = model.compressor.compress(ds.logits[0], 0)
        assert evaluate_estimator(absent, z) == pytest.approx(1.0 / 8.0)
        present = model.estimator(0, 0)
        assert evaluate_estimator(present, z) == pytest.approx(7.0 / 8.0)


class TestPosteriorModel:
    def test_equal_estimators_give_uniform(self):
        model = constant_model([0.3, 0.3, 0.3, 0.3])
        p = model.terminal_posteriors([4.0, 1.0, 0.0, -1.0])
        np.testing.assert_allclose(p, 0.25, atol=1e-12)

    def test_hand_set_values_normalize_to_themselves(self):
        model = constant_model([0.8, 0.1, 0.1])
        p = model.terminal_posteriors([2.0, 1.0, 0.0])
        np.testing.assert_allclose(p, [0.8, 0.1, 0.1], atol=1e-12)

    def test_fallback_returns_softmax(self):
        config = SyntheticConfig(n_classes=3, dim=2, val_per_class=20,
                                 test_per_class=5)
        split = generate_synthetic(config, 3)
        model = fit_estimators(split.val, fit_compressor("none", split.val))
        model.fallback = frozenset(range(3))
        for row in split.test.logits:
            np.testing.assert_allclose(
                model.terminal_posteriors(row), softmax(row), atol=1e-15
            )

    def test_empty_dataset_falls_back_everywhere(self):
        ds = LogitDataset(("a", "b"), np.zeros((0, 2)), np.zeros(0, dtype=int))
        model = fit_estimators(ds, fit_compressor("none", ds))
        assert model.fallback == frozenset({0, 1})
        rebuilt = read_model(write_model(model))
        np.testing.assert_allclose(
            rebuilt.terminal_posteriors([2.0, 0.0]), softmax([2.0, 0.0])
        )

    def test_empty_subset_marks_fallback(self):
        # nothing ever argmax-predicts label 1
        logits = np.column_stack([
            np.array([3.0, 3.0, 0.0, 0.0]),
            np.full(4, -1.0),
            np.array([0.0, 0.0, 3.0, 3.0]),
        ])
        ds = LogitDataset(("a", "b", "c"), logits, [0, 0, 2, 2])
        model = fit_estimators(ds, fit_compressor("none", ds))
        assert model.fallback == frozenset({1})

    def test_posteriors_normalized_and_bounded(self):
        config = SyntheticConfig(n_classes=4, dim=3, val_per_class=40,
                                 test_per_class=60, mean_scale=1.5)
        split = generate_synthetic(config, 4)
        comp = fit_compressor("confusion", split.val, level=2)
        model = fit_estimators(split.val, comp)
        for row in split.test.logits:
            p = model.terminal_posteriors(row)
            assert abs(p.sum() - 1.0) <= 1e-9
            assert np.all(p >= 0.0) and np.all(p <= 1.0)

    def test_dimension_mismatch(self):
        model = constant_model([0.5, 0.5])
        with pytest.raises(ValueError, match="shape"):
            model.terminal_posteriors([1.0, 2.0, 3.0])


class TestDeterminismAndSerialization:
    def _model(self, seed=5):
        config = SyntheticConfig(n_classes=3, dim=2, val_per_class=30,
                                 test_per_class=10, mean_scale=1.2)
        split = generate_synthetic(config, seed)
        comp = fit_compressor("confusion", split.val, level=2)
        return split, fit_estimators(split.val, comp)

    def test_refit_is_byte_identical(self):
        _, a = self._model()
        _, b = self._model()
        assert write_model(a) == write_model(b)

    def test_round_trip_preserves_posteriors_exactly(self):
        split, model = self._model()
        rebuilt = read_model(write_model(model))
        assert rebuilt.label_names == model.label_names
        assert rebuilt.fallback == model.fallback
        for row in split.test.logits:
            np.testing.assert_array_equal(
                rebuilt.terminal_posteriors(row),
                model.terminal_posteriors(row),
            )

    def test_rejects_garbage(self):
        with pytest.raises(ValueError, match="model file"):
            read_model("not a model\n")


class TestAgainstOracleReference:
    def test_true_label_posterior_tracks_reference(self):
        # undistorted logits, generous data: the calibrated posterior of
        # the true label should rank examples like the exact posterior
        config = SyntheticConfig(n_classes=3, dim=3, val_per_class=5000,
                                 test_per_class=400, mean_scale=1.0)
        split = generate_synthetic(config, 6)
        comp = fit_compressor("confusion", split.val, level=2)
        model = fit_estimators(split.val, comp)
        estimated = np.array([
            model.terminal_posteriors(row)[truth]
            for row, truth in zip(split.test.logits, split.test.labels)
        ])
        reference = split.test_posteriors[
            np.arange(len(split.test)), split.test.labels
        ]
        rho = spearmanr(estimated, reference).statistic
        assert rho >= 0.9
