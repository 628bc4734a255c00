"""Logit compression: generalized-logit aggregation, confusion-based tail
compression, global/local PCA projection, tree-based grouping, and the
single-logit baseline.

Every scheme exposes the same surface through a small compressor object:
``compress(logits, i)`` maps a full logit vector to the compressed feature
vector used by the posterior estimators conditioned on predicted label
``i``, and ``dim(i)`` gives its length. Compressors are immutable once
fitted and serialize to a line-based text format so fitting and inference
can run as separate processes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def softmax(logits):
    """Numerically stable softmax along the last axis."""
    z = np.asarray(logits, dtype=float)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def aggregate_logits(logits, group):
    """Generalized logit of a label group: ln of the summed exponentials.

    The softmax of the returned value within the reduced vector equals
    the sum of the group members' softmaxes in the original vector, so
    aggregation preserves probability mass exactly. Evaluation subtracts
    the group max before exponentiating; a singleton group returns its
    member's logit bit-exactly. Member indices are sorted first so the
    result does not depend on the iteration order of ``group``.
    """
    idx = np.asarray(sorted(group), dtype=int)
    if idx.size == 0:
        raise ValueError("empty label group")
    vals = np.asarray(logits, dtype=float)[idx]
    m = float(np.max(vals))
    return m + float(np.log(np.sum(np.exp(vals - m))))


# -- confusion-based tail compression --------------------------------------


@dataclass(frozen=True)
class ConfusionPlan:
    """Per predicted label: kept labels (most-confused first) plus one tail.

    ``kept[i]`` holds the ``level - 1`` labels with the highest counts in
    column i of the confusion matrix (stable descending sort, so equal
    counts keep their original index order); ``tail[i]`` holds the rest,
    compressed into a single generalized logit.
    """

    level: int
    kept: tuple
    tail: tuple

    @property
    def n_labels(self):
        return len(self.kept)


def build_confusion_plan(counts, level):
    """Sort each confusion column and split it into kept labels and a tail."""
    counts = np.asarray(counts)
    n = counts.shape[0]
    if counts.shape != (n, n):
        raise ValueError("confusion matrix must be square")
    if not 1 <= level <= n:
        raise ValueError(f"compression level {level} outside [1, {n}]")
    kept, tail = [], []
    for i in range(n):
        order = np.argsort(-counts[:, i], kind="stable")
        kept.append(tuple(int(k) for k in order[: level - 1]))
        tail.append(tuple(int(k) for k in order[level - 1:]))
    return ConfusionPlan(level, tuple(kept), tuple(tail))


def compress_confusion(logits, plan, i):
    """Kept logits in plan order followed by the aggregated tail logit."""
    L = np.asarray(logits, dtype=float)
    if L.shape != (plan.n_labels,):
        raise ValueError(
            f"logit vector has length {L.shape}, plan expects {plan.n_labels}"
        )
    if not 0 <= i < plan.n_labels:
        raise ValueError(f"predicted label {i} out of range")
    out = [float(L[k]) for k in plan.kept[i]]
    out.append(aggregate_logits(L, plan.tail[i]))
    return np.asarray(out, dtype=float)


# -- PCA compression --------------------------------------------------------


@dataclass(frozen=True)
class PcaProjection:
    """Mean-centered orthonormal projection onto leading principal axes.

    Components are rows, in descending eigenvalue order, each with its
    first non-zero coordinate made positive so fits are reproducible.
    """

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    @property
    def level(self):
        return self.components.shape[0]


def _fix_signs(components):
    fixed = components.copy()
    for row in fixed:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return fixed


def fit_pca(data, level):
    """Principal axes of a logit sample via SVD of the centered data.

    Ranks beyond the data's rank are filled from the SVD's orthonormal
    completion (zero eigenvalue), so the requested dimensionality is
    always honored.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("PCA needs at least 2 vectors")
    n, d = X.shape
    if not 1 <= level <= d:
        raise ValueError(f"level {level} outside [1, {d}]")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=True)
    eig = np.zeros(d)
    eig[: s.size] = s**2 / (n - 1)
    return PcaProjection(mean, _fix_signs(vt[:level]), eig[:level])


def compress_pca(logits, projection):
    """Project a mean-centered logit vector onto the retained components."""
    L = np.asarray(logits, dtype=float)
    if L.shape != projection.mean.shape:
        raise ValueError("logit vector does not match the fitted dimension")
    return projection.components @ (L - projection.mean)


# -- tree-based compression --------------------------------------------------


@dataclass(frozen=True)
class TreePlan:
    """Per terminal: ordered label groups that partition the label set.

    The first group is the terminal itself; subsequent groups are the
    terminal sets of the sibling subtrees branching off its root-ward
    path, children enumerated in hierarchy-file order, walked leaf to
    root. Feature length therefore varies with the conditioning label.
    """

    groups: tuple
    n_labels: int


def build_tree_plan(hierarchy):
    groups = []
    for i, leaf in enumerate(hierarchy.terminals):
        path = hierarchy.ancestral_path(leaf)
        per = [(i,)]
        for node, parent in zip(path, path[1:]):
            for sibling in hierarchy.children[parent]:
                if sibling != node:
                    per.append(
                        tuple(sorted(hierarchy.descendant_indices(sibling)))
                    )
        groups.append(tuple(per))
    return TreePlan(tuple(groups), hierarchy.n_terminals)


def compress_tree(logits, plan, i):
    L = np.asarray(logits, dtype=float)
    if L.shape != (plan.n_labels,):
        raise ValueError("logit vector does not match the plan dimension")
    if not 0 <= i < plan.n_labels:
        raise ValueError(f"predicted label {i} out of range")
    return np.asarray(
        [aggregate_logits(L, g) for g in plan.groups[i]], dtype=float
    )


def compress_single_logit(logits, i):
    """One-dimensional baseline feature: the predicted label's own logit."""
    L = np.asarray(logits, dtype=float)
    if not 0 <= i < L.shape[0]:
        raise ValueError(f"predicted label {i} out of range")
    return np.asarray([float(L[i])])


# -- uniform compressor objects ----------------------------------------------

SCHEMES = ("confusion", "pca-global", "pca-local", "tree", "single-logit", "none")
LEVEL_FREE_SCHEMES = ("tree", "single-logit", "none")


class ConfusionCompressor:
    scheme = "confusion"

    def __init__(self, plan):
        self.plan = plan
        self.n_labels = plan.n_labels

    def compress(self, logits, i):
        return compress_confusion(logits, self.plan, i)

    def dim(self, i):
        return self.plan.level

    def to_lines(self):
        lines = [
            f"scheme={self.scheme}",
            f"labels={self.n_labels}",
            f"level={self.plan.level}",
        ]
        for i in range(self.n_labels):
            lines.append(f"kept.{i}=" + ",".join(map(str, self.plan.kept[i])))
            lines.append(f"tail.{i}=" + ",".join(map(str, self.plan.tail[i])))
        return lines


class GlobalPcaCompressor:
    scheme = "pca-global"

    def __init__(self, projection, n_labels):
        self.projection = projection
        self.n_labels = n_labels

    def compress(self, logits, i):
        return compress_pca(logits, self.projection)

    def dim(self, i):
        return self.projection.level

    def to_lines(self):
        lines = [
            f"scheme={self.scheme}",
            f"labels={self.n_labels}",
            f"level={self.projection.level}",
        ]
        lines.extend(_projection_lines("", self.projection))
        return lines


class LocalPcaCompressor:
    """Per-label projections fit on argmax-selected records.

    Labels whose subsets held fewer than 2 records use the global
    projection instead.
    """

    scheme = "pca-local"

    def __init__(self, local, global_projection, n_labels):
        self.local = dict(local)
        self.global_projection = global_projection
        self.n_labels = n_labels

    def projection_for(self, i):
        return self.local.get(i, self.global_projection)

    def compress(self, logits, i):
        if not 0 <= i < self.n_labels:
            raise ValueError(f"predicted label {i} out of range")
        return compress_pca(logits, self.projection_for(i))

    def dim(self, i):
        return self.projection_for(i).level

    def to_lines(self):
        lines = [
            f"scheme={self.scheme}",
            f"labels={self.n_labels}",
            f"level={self.global_projection.level}",
        ]
        lines.extend(_projection_lines("global.", self.global_projection))
        for i in sorted(self.local):
            lines.extend(_projection_lines(f"local.{i}.", self.local[i]))
        return lines


class TreeCompressor:
    scheme = "tree"

    def __init__(self, plan):
        self.plan = plan
        self.n_labels = plan.n_labels

    def compress(self, logits, i):
        return compress_tree(logits, self.plan, i)

    def dim(self, i):
        return len(self.plan.groups[i])

    def to_lines(self):
        lines = [f"scheme={self.scheme}", f"labels={self.n_labels}"]
        for i, per in enumerate(self.plan.groups):
            encoded = "|".join(",".join(map(str, g)) for g in per)
            lines.append(f"groups.{i}={encoded}")
        return lines


class SingleLogitCompressor:
    scheme = "single-logit"

    def __init__(self, n_labels):
        self.n_labels = n_labels

    def compress(self, logits, i):
        L = np.asarray(logits, dtype=float)
        if L.shape != (self.n_labels,):
            raise ValueError("logit vector does not match the fitted dimension")
        return compress_single_logit(L, i)

    def dim(self, i):
        return 1

    def to_lines(self):
        return [f"scheme={self.scheme}", f"labels={self.n_labels}"]


class IdentityCompressor:
    """Uncompressed baseline: the raw logit vector is the feature vector."""

    scheme = "none"

    def __init__(self, n_labels):
        self.n_labels = n_labels

    def compress(self, logits, i):
        L = np.asarray(logits, dtype=float)
        if L.shape != (self.n_labels,):
            raise ValueError("logit vector does not match the fitted dimension")
        return L.copy()

    def dim(self, i):
        return self.n_labels

    def to_lines(self):
        return [f"scheme={self.scheme}", f"labels={self.n_labels}"]


def fit_compressor(scheme, dataset, level=None, hierarchy=None):
    """Fit the requested compression scheme on a validation dataset.

    ``level`` is required for the confusion and PCA schemes and rejected
    for the schemes whose dimensionality is intrinsic (tree, single-logit,
    none).
    """
    from .dataset import build_confusion, partition_by_prediction

    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme in LEVEL_FREE_SCHEMES:
        if level is not None:
            raise ValueError(f"scheme {scheme!r} does not take a level")
    elif level is None:
        raise ValueError(f"scheme {scheme!r} requires a compression level")

    n = dataset.n_labels
    if scheme == "confusion":
        return ConfusionCompressor(build_confusion_plan(build_confusion(dataset), level))
    if scheme == "pca-global":
        return GlobalPcaCompressor(fit_pca(dataset.logits, level), n)
    if scheme == "pca-local":
        global_projection = fit_pca(dataset.logits, level)
        local = {}
        for i, idx in partition_by_prediction(dataset).items():
            if idx.size >= 2:
                local[i] = fit_pca(dataset.logits[idx], level)
        return LocalPcaCompressor(local, global_projection, n)
    if scheme == "tree":
        if hierarchy is None:
            raise ValueError("tree scheme requires a hierarchy")
        if hierarchy.n_terminals != n:
            raise ValueError("hierarchy and dataset disagree on label count")
        return TreeCompressor(build_tree_plan(hierarchy))
    if scheme == "single-logit":
        return SingleLogitCompressor(n)
    return IdentityCompressor(n)


# -- text serialization -------------------------------------------------------


def _projection_lines(prefix, projection):
    lines = [
        prefix + "mean=" + _join_floats(projection.mean),
        prefix + "eigenvalues=" + _join_floats(projection.eigenvalues),
    ]
    for k, row in enumerate(projection.components):
        lines.append(prefix + f"component.{k}=" + _join_floats(row))
    return lines


def _join_floats(values):
    return ",".join(repr(float(v)) for v in values)


def _split_floats(text):
    return np.asarray(
        [float(v) for v in text.split(",")] if text else [], dtype=float
    )


def _split_ints(text):
    return tuple(int(v) for v in text.split(",")) if text else ()


def _read_projection(fields, prefix, level):
    components = np.vstack(
        [_split_floats(fields[prefix + f"component.{k}"]) for k in range(level)]
    )
    return PcaProjection(
        _split_floats(fields[prefix + "mean"]),
        components,
        _split_floats(fields[prefix + "eigenvalues"]),
    )


def compressor_from_lines(lines):
    """Rebuild a compressor from its ``to_lines`` serialization."""
    fields = {}
    for ln in lines:
        key, _, value = ln.partition("=")
        fields[key] = value
    scheme = fields.get("scheme")
    n = int(fields["labels"])
    if scheme == "confusion":
        level = int(fields["level"])
        kept = tuple(_split_ints(fields[f"kept.{i}"]) for i in range(n))
        tail = tuple(_split_ints(fields[f"tail.{i}"]) for i in range(n))
        return ConfusionCompressor(ConfusionPlan(level, kept, tail))
    if scheme == "pca-global":
        return GlobalPcaCompressor(
            _read_projection(fields, "", int(fields["level"])), n
        )
    if scheme == "pca-local":
        level = int(fields["level"])
        local = {}
        for i in range(n):
            if f"local.{i}.mean" in fields:
                local[i] = _read_projection(fields, f"local.{i}.", level)
        return LocalPcaCompressor(
            local, _read_projection(fields, "global.", level), n
        )
    if scheme == "tree":
        groups = tuple(
            tuple(_split_ints(g) for g in fields[f"groups.{i}"].split("|"))
            for i in range(n)
        )
        return TreeCompressor(TreePlan(groups, n))
    if scheme == "single-logit":
        return SingleLogitCompressor(n)
    if scheme == "none":
        return IdentityCompressor(n)
    raise ValueError(f"unknown scheme {scheme!r} in serialized compressor")
