"""Logit datasets: CSV ingestion, argmax partitioning, confusion counts,
and a Gaussian synthetic generator with closed-form reference posteriors.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .compression import softmax


class DatasetError(ValueError):
    """Invalid logit dataset content or request."""


@dataclass(eq=False)
class LogitDataset:
    """Per-example ground-truth terminal index plus a full logit vector.

    ``logits`` has shape (n, |C|) with |C| >= 2; ``labels`` holds integer
    ground-truth indices into ``label_names``. Instances are treated as
    immutable after construction.
    """

    label_names: tuple
    logits: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.label_names = tuple(self.label_names)
        if len(self.label_names) < 2:
            raise DatasetError("need at least 2 terminal labels")
        if len(set(self.label_names)) != len(self.label_names):
            raise DatasetError("duplicate label names")
        self.logits = np.asarray(self.logits, dtype=float).reshape(
            -1, len(self.label_names)
        )
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        if self.labels.shape[0] != self.logits.shape[0]:
            raise DatasetError("labels and logits disagree on length")
        if not np.all(np.isfinite(self.logits)):
            raise DatasetError("non-finite logit values")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.n_labels
        ):
            raise DatasetError("ground-truth index out of range")

    @property
    def n_labels(self):
        return len(self.label_names)

    def __len__(self):
        return self.logits.shape[0]

    def subset(self, indices):
        """New dataset restricted to the given record indices, in order."""
        idx = np.asarray(indices, dtype=int)
        return LogitDataset(self.label_names, self.logits[idx], self.labels[idx])


def argmax_label(logits):
    """Index of the maximum logit; ties break toward the lowest index."""
    return int(np.argmax(np.asarray(logits)))


def predicted_labels(dataset):
    """Argmax prediction for every record, shape (n,)."""
    if len(dataset) == 0:
        return np.zeros(0, dtype=int)
    return np.argmax(dataset.logits, axis=1)


def partition_by_prediction(dataset):
    """Record indices grouped by argmax prediction.

    Returns a dict covering every label index; groups are disjoint, may
    be empty, and together cover the whole dataset.
    """
    preds = predicted_labels(dataset)
    return {
        i: np.flatnonzero(preds == i) for i in range(dataset.n_labels)
    }


def build_confusion(dataset):
    """Confusion counts with rows = ground truth, columns = predicted."""
    c = dataset.n_labels
    counts = np.zeros((c, c), dtype=np.int64)
    preds = predicted_labels(dataset)
    np.add.at(counts, (dataset.labels, preds), 1)
    return counts


# -- CSV interchange ------------------------------------------------------


def load_dataset(text):
    """Parse the logit CSV format.

    Header: ``label,<name_0>,...,<name_{k-1}>``; each data row is a
    ground-truth label name followed by k decimal logits. An empty body
    yields an empty (but valid) dataset.
    """
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise DatasetError("empty CSV: missing header")
    header = [c.strip() for c in rows[0]]
    if len(header) < 3 or header[0] != "label":
        raise DatasetError("header must be 'label,<name_0>,...' with >= 2 names")
    names = tuple(header[1:])
    index = {n: k for k, n in enumerate(names)}

    labels = []
    logits = []
    for lineno, row in enumerate(rows[1:], start=2):
        row = [c.strip() for c in row]
        if len(row) != len(names) + 1:
            raise DatasetError(
                f"line {lineno}: expected {len(names) + 1} fields, got {len(row)}"
            )
        if row[0] not in index:
            raise DatasetError(f"line {lineno}: unknown label {row[0]!r}")
        labels.append(index[row[0]])
        try:
            logits.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: non-numeric logit") from exc
    return LogitDataset(
        names,
        np.asarray(logits, dtype=float).reshape(-1, len(names)),
        np.asarray(labels, dtype=int),
    )


def dump_dataset(dataset):
    """Serialize a dataset back to the logit CSV format (exact floats)."""
    out = ["label," + ",".join(dataset.label_names)]
    for truth, row in zip(dataset.labels, dataset.logits):
        out.append(
            dataset.label_names[truth]
            + ","
            + ",".join(repr(float(v)) for v in row)
        )
    return "\n".join(out) + "\n"


def load_dataset_file(path):
    with open(path, encoding="utf-8") as fh:
        return load_dataset(fh.read())


def subsample_per_class(dataset, per_class, seed):
    """Class-wise random subset of ``per_class`` records per label.

    The within-class order is a seeded shuffle of the dataset order, so
    for a fixed seed the subsets are nested: a smaller request is a
    prefix of a larger one.
    """
    if per_class <= 0:
        raise DatasetError("per_class must be positive")
    picked = []
    for j in range(dataset.n_labels):
        idx = np.flatnonzero(dataset.labels == j)
        if idx.size < per_class:
            raise DatasetError(
                f"label {dataset.label_names[j]!r} has {idx.size} records, "
                f"requested {per_class}"
            )
        rng = np.random.default_rng([seed, j])
        picked.append(idx[rng.permutation(idx.size)][:per_class])
    return dataset.subset(np.concatenate(picked))


# -- synthetic generator --------------------------------------------------


@dataclass
class SyntheticConfig:
    """Gaussian class-conditional generator settings.

    Features are drawn per class from N(mean_j, I_d); the exact class
    log-likelihoods (up to a shared additive constant) serve as logits,
    so the true posterior of each example is the softmax of the
    undistorted logits. The stored logits may be distorted by a fixed
    affine map plus temperature: ``distort_temperature`` multiplies them
    (values > 1 produce overconfident scores), ``distort_bias`` adds a
    fixed seeded per-label offset vector, and ``distort_common_mode``
    adds that multiple of each example's mean logit to every coordinate
    (a softmax-invariant nuisance direction). The reference posteriors
    always come from the undistorted logits.
    """

    n_classes: int
    dim: int = 4
    val_per_class: int = 100
    test_per_class: int = 100
    mean_scale: float = 2.0
    means: np.ndarray | None = None
    distort_temperature: float = 1.0
    distort_bias: float = 0.0
    distort_common_mode: float = 0.0
    label_names: tuple | None = None

    def __post_init__(self):
        if self.n_classes < 2:
            raise DatasetError("need at least 2 classes")
        if self.val_per_class <= 0 or self.test_per_class <= 0:
            raise DatasetError("per-class sample counts must be positive")
        if self.dim <= 0:
            raise DatasetError("feature dimension must be positive")
        if self.means is not None:
            self.means = np.asarray(self.means, dtype=float)
            if self.means.shape != (self.n_classes, self.dim):
                raise DatasetError("means must have shape (n_classes, dim)")
        if self.label_names is None:
            self.label_names = tuple(f"c{k}" for k in range(self.n_classes))


@dataclass
class SyntheticSplit:
    """Validation/test datasets plus row-aligned true posteriors."""

    val: LogitDataset
    test: LogitDataset
    val_posteriors: np.ndarray = field(repr=False)
    test_posteriors: np.ndarray = field(repr=False)
    means: np.ndarray = field(repr=False)


def generate_synthetic(config, seed):
    """Draw validation and test logit datasets with known posteriors.

    Deterministic for a given config and seed. Returned posterior arrays
    are softmaxes of the exact (undistorted) logits and sum to 1 per row.
    """
    rng = np.random.default_rng(seed)
    k, d = config.n_classes, config.dim
    means = config.means
    if means is None:
        means = rng.standard_normal((k, d)) * config.mean_scale
    bias = (
        rng.standard_normal(k) * config.distort_bias
        if config.distort_bias
        else np.zeros(k)
    )

    def draw(per_class):
        feats = np.vstack(
            [means[j] + rng.standard_normal((per_class, d)) for j in range(k)]
        )
        labels = np.repeat(np.arange(k), per_class)
        # Class log-likelihood up to a shared constant; priors are uniform.
        exact = feats @ means.T - 0.5 * np.sum(means**2, axis=1)
        reference = softmax(exact)
        stored = exact * config.distort_temperature + bias
        if config.distort_common_mode:
            stored = stored + config.distort_common_mode * stored.mean(
                axis=1, keepdims=True
            )
        return LogitDataset(config.label_names, stored, labels), reference

    val, val_post = draw(config.val_per_class)
    test, test_post = draw(config.test_per_class)
    return SyntheticSplit(val, test, val_post, test_post, means)
