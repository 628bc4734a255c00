"""Posterior estimation over compressed logits.

A model holds one logistic estimator per (conditioning label i, target
label j) pair. Estimators conditioned on i are trained on the validation
records whose argmax prediction is i, compressed under i; targets mark
whether the record's ground truth equals j. Conditioning labels with no
validation records fall back to the base classifier's softmax.

The sigmoid argument follows the W.z - B convention, so serialized
parameters are directly interpretable as (weights, bias) in

    p(z) = 1 / (1 + exp(-(W.z - B)))
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .compression import compressor_from_lines, softmax
from .dataset import partition_by_prediction

L2_PENALTY = 1e-4
GRAD_TOL = 1e-6
MAX_ITER = 500
LBFGS_HISTORY = 10


class FitDivergenceError(RuntimeError):
    """Non-finite loss or parameters in one or more estimator fits."""


@dataclass(frozen=True)
class PosteriorEstimator:
    """Logistic estimator p(truth = target | base prediction = conditioned_on)."""

    conditioned_on: int
    target: int
    weights: np.ndarray
    bias: float


def evaluate_estimator(estimator, z):
    """Probability in (0, 1) for a compressed feature vector."""
    z = np.asarray(z, dtype=float)
    if z.shape != estimator.weights.shape:
        raise ValueError(
            f"feature vector has shape {z.shape}, "
            f"estimator expects {estimator.weights.shape}"
        )
    return float(expit(float(estimator.weights @ z) - estimator.bias))


def logistic_loss_grad(params, features, targets, l2=L2_PENALTY):
    """Mean binary cross-entropy plus (l2/2)*|W|^2; bias unpenalized.

    ``params`` is the flat vector (W..., B); returns (loss, gradient).
    """
    w, b = params[:-1], params[-1]
    a = features @ w - b
    # softplus(+-a) keeps the cross-entropy finite for extreme margins
    per = targets * np.logaddexp(0.0, -a) + (1.0 - targets) * np.logaddexp(0.0, a)
    loss = float(np.mean(per)) + 0.5 * l2 * float(w @ w)
    residual = (expit(a) - targets) / targets.size
    grad = np.append(features.T @ residual + l2 * w, -np.sum(residual))
    return loss, grad


def fit_logistic(features, targets, l2=L2_PENALTY, grad_tol=GRAD_TOL,
                 max_iter=MAX_ITER):
    """L-BFGS fit from zero initialization.

    Stops when the projected-gradient infinity norm drops to ``grad_tol``
    or after ``max_iter`` iterations; the relative-decrease stop is
    disabled so the gradient tolerance governs. Deterministic for a fixed
    input order.
    """
    Z = np.asarray(features, dtype=float)
    t = np.asarray(targets, dtype=float)
    result = minimize(
        logistic_loss_grad,
        np.zeros(Z.shape[1] + 1),
        args=(Z, t, l2),
        jac=True,
        method="L-BFGS-B",
        options={
            "maxiter": max_iter,
            "maxcor": LBFGS_HISTORY,
            "gtol": grad_tol,
            "ftol": 0.0,
        },
    )
    if not np.isfinite(result.fun) or not np.all(np.isfinite(result.x)):
        raise FitDivergenceError("non-finite optimizer state")
    return result.x[:-1], float(result.x[-1])


def constant_estimator_bias(n_positive, n_total):
    """Bias of a zero-weight estimator at the add-one smoothed rate.

    Used when all targets in a subset agree, where an unsmoothed fit
    would push the bias to infinity.
    """
    rate = (n_positive + 1) / (n_total + 2)
    return -math.log(rate / (1.0 - rate))


@dataclass
class LabelEstimators:
    """All target estimators conditioned on one base-prediction label."""

    weights: np.ndarray  # (n_labels, dim_i)
    biases: np.ndarray   # (n_labels,)


@dataclass
class PosteriorModel:
    """Complete grid of posterior estimators plus its compression scheme.

    ``per_label`` maps each conditioning label with validation data to
    its estimator block; ``fallback`` lists the conditioning labels whose
    subsets were empty and therefore answer with softmax(L).
    """

    label_names: tuple
    compressor: object
    per_label: dict = field(repr=False)
    fallback: frozenset = frozenset()

    @property
    def n_labels(self):
        return len(self.label_names)

    def estimator(self, i, j):
        block = self.per_label[i]
        return PosteriorEstimator(
            i, j, block.weights[j].copy(), float(block.biases[j])
        )

    def terminal_posteriors(self, logits):
        """Calibrated, L1-normalized terminal posteriors for one example."""
        L = np.asarray(logits, dtype=float)
        if L.shape != (self.n_labels,):
            raise ValueError(
                f"logit vector has shape {L.shape}, model expects ({self.n_labels},)"
            )
        y = int(np.argmax(L))
        if y in self.fallback:
            return softmax(L)
        block = self.per_label[y]
        z = self.compressor.compress(L, y)
        raw = expit(block.weights @ z - block.biases)
        total = float(np.sum(raw))
        if total <= 0.0:
            # every sigmoid underflowed; only the base softmax is usable
            return softmax(L)
        return raw / total


def fit_estimators(dataset, compressor, l2=L2_PENALTY, grad_tol=GRAD_TOL,
                   max_iter=MAX_ITER):
    """Fit the full |C| x |C| grid of posterior estimators.

    Single-class target subsets become constant predictors at the
    add-one smoothed rate instead of going through the optimizer.
    Divergent fits are collected and reported together.
    """
    n = dataset.n_labels
    parts = partition_by_prediction(dataset)
    per_label = {}
    fallback = set()
    failures = []
    for i in range(n):
        idx = parts[i]
        if idx.size == 0:
            fallback.add(i)
            continue
        Z = np.vstack([compressor.compress(row, i) for row in dataset.logits[idx]])
        truths = dataset.labels[idx]
        weights = np.zeros((n, Z.shape[1]))
        biases = np.zeros(n)
        for j in range(n):
            t = (truths == j).astype(float)
            positives = int(t.sum())
            if positives == 0 or positives == t.size:
                biases[j] = constant_estimator_bias(positives, t.size)
                continue
            try:
                weights[j], biases[j] = fit_logistic(
                    Z, t, l2=l2, grad_tol=grad_tol, max_iter=max_iter
                )
            except FitDivergenceError:
                failures.append((i, j))
        per_label[i] = LabelEstimators(weights, biases)
    if failures:
        raise FitDivergenceError(
            "diverged estimator fits: "
            + ", ".join(f"({i},{j})" for i, j in failures)
        )
    return PosteriorModel(
        dataset.label_names, compressor, per_label, frozenset(fallback)
    )


# -- model file format ---------------------------------------------------------

_MODEL_HEADER = "hiercal-model v1"


def write_model(model):
    """Serialize a model to text with exact float round-trip."""
    lines = [
        _MODEL_HEADER,
        "labels=" + ",".join(model.label_names),
        "fallback=" + ",".join(str(i) for i in sorted(model.fallback)),
        "[compression]",
    ]
    lines.extend(model.compressor.to_lines())
    lines.append("[estimators]")
    for i in sorted(model.per_label):
        block = model.per_label[i]
        for j in range(model.n_labels):
            row = list(block.weights[j]) + [block.biases[j]]
            lines.append(
                f"est.{i}.{j}=" + ",".join(repr(float(v)) for v in row)
            )
    return "\n".join(lines) + "\n"


def read_model(text):
    """Parse a model file produced by ``write_model``."""
    lines = text.splitlines()
    if not lines or lines[0] != _MODEL_HEADER:
        raise ValueError("not a recognized model file")
    label_names = tuple(lines[1].removeprefix("labels=").split(","))
    fallback_text = lines[2].removeprefix("fallback=")
    fallback = frozenset(int(v) for v in fallback_text.split(",") if v)

    comp_start = lines.index("[compression]") + 1
    est_start = lines.index("[estimators]")
    compressor = compressor_from_lines(lines[comp_start:est_start])

    n = len(label_names)
    rows = {}
    for ln in lines[est_start + 1:]:
        if not ln:
            continue
        key, _, value = ln.partition("=")
        _, i, j = key.split(".")
        rows[(int(i), int(j))] = np.asarray(
            [float(v) for v in value.split(",")], dtype=float
        )
    per_label = {}
    for i in sorted({i for i, _ in rows}):
        dim = rows[(i, 0)].size - 1
        weights = np.zeros((n, dim))
        biases = np.zeros(n)
        for j in range(n):
            weights[j] = rows[(i, j)][:-1]
            biases[j] = rows[(i, j)][-1]
        per_label[i] = LabelEstimators(weights, biases)
    return PosteriorModel(label_names, compressor, per_label, fallback)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return read_model(fh.read())
