import numpy as np
import pytest

from hiercal.compression import softmax
from hiercal.dataset import (
    DatasetError,
    LogitDataset,
    SyntheticConfig,
    argmax_label,
    build_confusion,
    dump_dataset,
    generate_synthetic,
    load_dataset,
    partition_by_prediction,
    subsample_per_class,
)

CSV_3 = (
    "label,cat,dog,bird\n"
    "cat,1.0,0.5,-0.5\n"
    "dog,0.0,2.0,1.0\n"
)


class TestLoading:
    def test_single_row(self):
        ds = load_dataset("label,dog,cat\ndog,0.1,2.0\n")
        assert len(ds) == 1
        assert ds.label_names == ("dog", "cat")
        assert ds.labels[0] == 0
        np.testing.assert_array_equal(ds.logits[0], [0.1, 2.0])

    def test_empty_body_is_valid(self):
        ds = load_dataset("label,a,b\n")
        assert len(ds) == 0
        assert ds.n_labels == 2

    def test_short_row(self):
        with pytest.raises(DatasetError, match="expected 3 fields"):
            load_dataset("label,a,b\na,1.0\n")

    def test_long_row(self):
        with pytest.raises(DatasetError, match="expected 3 fields"):
            load_dataset("label,a,b\na,1.0,2.0,3.0\n")

    def test_non_numeric(self):
        with pytest.raises(DatasetError, match="non-numeric"):
            load_dataset("label,a,b\na,1.0,x\n")

    def test_unknown_truth_label(self):
        with pytest.raises(DatasetError, match="unknown label"):
            load_dataset("label,a,b\nz,1.0,2.0\n")

    def test_bad_header(self):
        with pytest.raises(DatasetError, match="header"):
            load_dataset("a,b,c\n")
        with pytest.raises(DatasetError, match="header"):
            load_dataset("label,a\na,1.0\n")

    def test_round_trip(self):
        ds = load_dataset(CSV_3)
        again = load_dataset(dump_dataset(ds))
        assert again.label_names == ds.label_names
        np.testing.assert_array_equal(again.logits, ds.logits)
        np.testing.assert_array_equal(again.labels, ds.labels)

    def test_non_finite_rejected(self):
        with pytest.raises(DatasetError, match="non-finite"):
            LogitDataset(("a", "b"), [[np.inf, 0.0]], [0])


class TestArgmax:
    def test_plain(self):
        assert argmax_label([0.0, 3.0, 1.0]) == 1

    def test_tie_breaks_low_index(self):
        assert argmax_label([2.0, 2.0]) == 0
        assert argmax_label([1.0, 5.0, 5.0, 2.0]) == 1

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            v = rng.normal(size=8)
            shift = rng.normal()
            assert argmax_label(v) == argmax_label(v + shift)


class TestPartition:
    def test_all_one_class(self):
        ds = LogitDataset(("a", "b"), [[1.0, 0.0], [2.0, 0.0]], [0, 1])
        parts = partition_by_prediction(ds)
        assert list(parts[0]) == [0, 1]
        assert list(parts[1]) == []

    def test_distinct_argmaxes(self):
        ds = LogitDataset(("a", "b"), [[1.0, 0.0], [0.0, 1.0]], [0, 1])
        parts = partition_by_prediction(ds)
        assert list(parts[0]) == [0]
        assert list(parts[1]) == [1]

    def test_disjoint_cover(self):
        rng = np.random.default_rng(1)
        ds = LogitDataset(
            tuple("abcde"), rng.normal(size=(200, 5)), rng.integers(0, 5, 200)
        )
        parts = partition_by_prediction(ds)
        sizes = sum(len(v) for v in parts.values())
        assert sizes == len(ds)
        seen = np.concatenate([parts[i] for i in range(5)])
        assert sorted(seen) == list(range(200))


class TestConfusion:
    def test_single_record(self):
        ds = LogitDataset(("a", "b"), [[1.0, 0.0]], [0])
        counts = build_confusion(ds)
        assert counts[0, 0] == 1 and counts.sum() == 1

    def test_perfect_classifier_diagonal(self):
        eye = np.eye(3) * 5.0
        ds = LogitDataset(("a", "b", "c"), np.vstack([eye, eye]), [0, 1, 2] * 2)
        counts = build_confusion(ds)
        np.testing.assert_array_equal(counts, 2 * np.eye(3, dtype=int))

    def test_hand_counted_six_records(self):
        # truth -> argmax: a->a, a->b, b->b, b->b, c->a, c->c
        logits = [
            [3.0, 0.0, 0.0],
            [0.0, 3.0, 0.0],
            [0.0, 3.0, 0.0],
            [1.0, 2.0, 0.0],
            [5.0, 1.0, 0.0],
            [0.0, 0.0, 2.0],
        ]
        ds = LogitDataset(("a", "b", "c"), logits, [0, 0, 1, 1, 2, 2])
        expected = np.array([[1, 1, 0], [0, 2, 0], [1, 0, 1]])
        np.testing.assert_array_equal(build_confusion(ds), expected)

    def test_column_sums_match_partition(self):
        rng = np.random.default_rng(2)
        ds = LogitDataset(
            tuple("abcd"), rng.normal(size=(120, 4)), rng.integers(0, 4, 120)
        )
        counts = build_confusion(ds)
        parts = partition_by_prediction(ds)
        for j in range(4):
            assert counts[:, j].sum() == len(parts[j])


class TestSubsample:
    def _dataset(self):
        rng = np.random.default_rng(3)
        return LogitDataset(
            ("a", "b"), rng.normal(size=(20, 2)), [0] * 10 + [1] * 10
        )

    def test_nested_prefixes(self):
        ds = self._dataset()
        big = subsample_per_class(ds, 6, seed=9)
        small = subsample_per_class(ds, 3, seed=9)
        big_rows = {tuple(r) for r in big.logits}
        small_rows = {tuple(r) for r in small.logits}
        assert small_rows <= big_rows
        assert len(small) == 6 and len(big) == 12

    def test_oversized_request(self):
        with pytest.raises(DatasetError, match="requested 11"):
            subsample_per_class(self._dataset(), 11, seed=0)

    def test_deterministic(self):
        ds = self._dataset()
        a = subsample_per_class(ds, 5, seed=4)
        b = subsample_per_class(ds, 5, seed=4)
        np.testing.assert_array_equal(a.logits, b.logits)


class TestSynthetic:
    def test_identical_means_posterior_half(self):
        config = SyntheticConfig(
            n_classes=2, dim=3, val_per_class=20, test_per_class=20,
            means=np.ones((2, 3)),
        )
        split = generate_synthetic(config, 0)
        np.testing.assert_allclose(split.val_posteriors, 0.5, atol=1e-12)

    def test_posteriors_sum_to_one(self):
        config = SyntheticConfig(n_classes=5, dim=4, val_per_class=50,
                                 test_per_class=50)
        split = generate_synthetic(config, 1)
        np.testing.assert_allclose(split.val_posteriors.sum(axis=1), 1.0,
                                   atol=1e-12)
        np.testing.assert_allclose(split.test_posteriors.sum(axis=1), 1.0,
                                   atol=1e-12)

    def test_well_separated_accuracy_close_to_monte_carlo_bayes(self):
        config = SyntheticConfig(
            n_classes=3, dim=2, val_per_class=2000, test_per_class=2000,
            mean_scale=4.0,
        )
        split = generate_synthetic(config, 2)
        # Monte-Carlo estimate of the optimum: argmax of the exact posterior
        bayes_acc = np.mean(
            np.argmax(split.test_posteriors, axis=1) == split.test.labels
        )
        acc = np.mean(
            np.argmax(split.test.logits, axis=1) == split.test.labels
        )
        assert bayes_acc > 0.9
        assert abs(acc - bayes_acc) < 0.02  # undistorted logits are the posterior

    def test_temperature_distortion_inflates_confidence_gap(self):
        common = dict(n_classes=4, dim=3, val_per_class=1500,
                      test_per_class=1500, mean_scale=1.5)
        plain = generate_synthetic(SyntheticConfig(**common), 5)
        hot = generate_synthetic(
            SyntheticConfig(distort_temperature=3.0, **common), 5
        )

        def top_confidence_gap(ds):
            probs = softmax(ds.logits)
            conf = probs.max(axis=1)
            correct = probs.argmax(axis=1) == ds.labels
            # simple 10-bin calibration error over [0, 1]
            bins = np.minimum((conf * 10).astype(int), 9)
            total = 0.0
            for b in range(10):
                mask = bins == b
                if mask.any():
                    total += mask.mean() * abs(
                        correct[mask].mean() - conf[mask].mean()
                    )
            return total

        assert top_confidence_gap(hot.test) > 0.05
        assert top_confidence_gap(hot.test) > 3 * top_confidence_gap(plain.test)

    def test_deterministic_given_seed(self):
        config = SyntheticConfig(n_classes=3, dim=2, val_per_class=10,
                                 test_per_class=10)
        a = generate_synthetic(config, 7)
        b = generate_synthetic(config, 7)
        np.testing.assert_array_equal(a.val.logits, b.val.logits)
        np.testing.assert_array_equal(a.test.logits, b.test.logits)

    def test_invalid_configs(self):
        with pytest.raises(DatasetError):
            SyntheticConfig(n_classes=1)
        with pytest.raises(DatasetError):
            SyntheticConfig(n_classes=3, val_per_class=0)
        with pytest.raises(DatasetError):
            SyntheticConfig(n_classes=3, means=np.zeros((2, 4)))
