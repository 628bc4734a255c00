"""Bottom-up hierarchical inference and the tree-free set generalization.

Tree mode walks the ancestral path of the argmax prediction from leaf to
root, accumulating terminal posteriors, and returns the first node whose
mass reaches the confidence threshold. The running sum only ever grows,
so posteriors along the path are non-decreasing exactly, and the root is
pinned to exactly 1 so the walk always terminates.

Set mode sorts the terminal posteriors and accumulates them greedily
until the threshold is reached; the accumulated label set is the
prediction.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

KIND_TERMINAL = "terminal"
KIND_SUPERCLASS = "superclass"
KIND_ROOT = "root"
KIND_SET = "set"


@dataclass(frozen=True)
class HierarchicalPrediction:
    """A node of the hierarchy or an explicit terminal-label set.

    ``label`` is a node name for tree kinds and a tuple of terminal names
    (in accumulation order) for set predictions. ``posterior`` lies in
    [0, 1]; root and full-set predictions carry exactly 1.
    """

    kind: str
    label: object
    posterior: float


def _check_threshold(threshold):
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")


def ancestral_posteriors(hierarchy, posteriors, leaf_index):
    """(node, accumulated posterior) pairs along the path leaf -> root.

    Each step adds the posteriors of the node's newly covered terminals
    to a running sum (capped at 1), so the sequence is non-decreasing;
    the root entry is exactly 1.
    """
    p = np.asarray(posteriors, dtype=float)
    path = hierarchy.ancestral_path(hierarchy.terminals[leaf_index])
    out = []
    covered = frozenset()
    running = 0.0
    for node in path:
        if node == hierarchy.root:
            out.append((node, 1.0))
            continue
        idx = hierarchy.descendant_indices(node)
        for k in sorted(idx - covered):
            running += float(p[k])
        covered = idx
        out.append((node, min(running, 1.0)))
    return out


def node_kind(hierarchy, node):
    if node == hierarchy.root:
        return KIND_ROOT
    return KIND_TERMINAL if hierarchy.is_terminal(node) else KIND_SUPERCLASS


def infer_tree(model, hierarchy, logits, threshold):
    """Shallowest ancestral node of the argmax prediction meeting the threshold."""
    _check_threshold(threshold)
    posteriors = model.terminal_posteriors(logits)
    y = int(np.argmax(np.asarray(logits, dtype=float)))
    for node, p in ancestral_posteriors(hierarchy, posteriors, y):
        if p >= threshold:
            return HierarchicalPrediction(node_kind(hierarchy, node), node, p)
    raise AssertionError("unreachable: root posterior is 1")


def infer_set(model, logits, threshold):
    """Smallest prefix of the sorted posteriors reaching the threshold.

    Always emits at least one label; ties sort toward the lower index.
    If the positive-posterior labels are exhausted first, the set stops
    there. A set covering every label plays the role of the root and is
    pinned to posterior 1.
    """
    _check_threshold(threshold)
    posteriors = model.terminal_posteriors(logits)
    order = np.argsort(-posteriors, kind="stable")
    chosen = []
    running = 0.0
    for k in order:
        if chosen and (running >= threshold or posteriors[k] <= 0.0):
            break
        chosen.append(int(k))
        running += float(posteriors[k])
    if len(chosen) == model.n_labels:
        running = 1.0
    names = tuple(model.label_names[k] for k in chosen)
    return HierarchicalPrediction(KIND_SET, names, min(running, 1.0))


def infer_many(model, logits_matrix, threshold, mode="tree", hierarchy=None):
    """Run inference over a batch of logit vectors."""
    X = np.asarray(logits_matrix, dtype=float)
    if mode == "tree":
        if hierarchy is None:
            raise ValueError("tree mode requires a hierarchy")
        return [infer_tree(model, hierarchy, row, threshold) for row in X]
    if mode == "set":
        return [infer_set(model, row, threshold) for row in X]
    raise ValueError(f"unknown inference mode {mode!r}")


# -- prediction CSV ---------------------------------------------------------
# Super-class names may contain commas, so fields are CSV-quoted.

PREDICTIONS_COLUMNS = ["example_index", "kind", "label_or_set", "posterior"]


def predictions_to_csv(predictions):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PREDICTIONS_COLUMNS)
    for k, pred in enumerate(predictions):
        label = "|".join(pred.label) if pred.kind == KIND_SET else pred.label
        writer.writerow([k, pred.kind, label, repr(float(pred.posterior))])
    return buf.getvalue()


def predictions_from_csv(text):
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows or rows[0] != PREDICTIONS_COLUMNS:
        raise ValueError("not a recognized predictions CSV")
    out = []
    for _, kind, label, posterior in rows[1:]:
        if kind == KIND_SET:
            label = tuple(label.split("|"))
        out.append(HierarchicalPrediction(kind, label, float(posterior)))
    return out
