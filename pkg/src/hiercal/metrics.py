"""Outcome fractions, scaled information gain, TOPSIS, and calibration
error for hierarchical predictions.

Test examples split by whether the base classifier's argmax was correct
(the C side) or not (the IC side); each side partitions into four outcome
fractions. Together with the average scaled information gain these nine
criteria feed a TOPSIS score against fixed best/worst anchors. Expected
calibration error bins the retained (non-root) predictions over the
interval [threshold, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .inference import KIND_ROOT, KIND_SET, KIND_SUPERCLASS, KIND_TERMINAL

C_PERSIST = "c_persist"
C_SOFT = "c_soft"
C_WITHDRAWN = "c_withdrawn"
C_CORRUPT = "c_corrupt"
IC_PERSIST = "ic_persist"
IC_REFORM = "ic_reform"
IC_REMAIN = "ic_remain"
IC_WITHDRAWN = "ic_withdrawn"

C_SIDE = (C_PERSIST, C_SOFT, C_WITHDRAWN, C_CORRUPT)
IC_SIDE = (IC_PERSIST, IC_REFORM, IC_REMAIN, IC_WITHDRAWN)

# Canonical criterion order for TOPSIS vectors.
CRITERIA = (
    C_PERSIST, C_SOFT, C_WITHDRAWN, C_CORRUPT,
    IC_PERSIST, IC_REFORM, IC_REMAIN, IC_WITHDRAWN,
    "avg_sig",
)

TOPSIS_BEST = np.array([1, 0, 0, 0, 0, 1, 0, 0, 1], dtype=float)
TOPSIS_WORST = np.array([0, 0, 0, 1, 1, 0, 0, 0, 0], dtype=float)

ECE_BINS = 10


def _coverage(pred, truth, label_names, hierarchy):
    """(plays_root, size, contains_truth, is_singleton) for one prediction."""
    n = len(label_names)
    if pred.kind == KIND_ROOT:
        return True, n, True, False
    if pred.kind == KIND_TERMINAL:
        return False, 1, pred.label == label_names[truth], True
    if pred.kind == KIND_SUPERCLASS:
        if hierarchy is None:
            raise ValueError("super-class predictions require a hierarchy")
        idx = hierarchy.descendant_indices(pred.label)
        return False, len(idx), truth in idx, False
    if pred.kind == KIND_SET:
        members = set(pred.label)
        full = len(members) == n
        return full, len(members), label_names[truth] in members, len(members) == 1
    raise ValueError(f"unknown prediction kind {pred.kind!r}")


def classify_outcome(pred, truth, base_pred, label_names, hierarchy=None):
    """Outcome tag for one prediction given truth and base argmax indices.

    Set predictions take the node roles by shape: a full set plays the
    root, membership of the truth plays descendant containment, and a
    singleton plays a terminal. A singleton that contains the truth
    counts as reform on the IC side, not persist.
    """
    plays_root, _, contains, singleton = _coverage(
        pred, truth, label_names, hierarchy
    )
    if base_pred == truth:
        if plays_root:
            return C_WITHDRAWN
        if not contains:
            return C_CORRUPT
        return C_PERSIST if singleton else C_SOFT
    if plays_root:
        return IC_WITHDRAWN
    if pred.kind == KIND_TERMINAL or (pred.kind == KIND_SET and singleton):
        if not contains:
            return IC_PERSIST
        return IC_REFORM
    return IC_REFORM if contains else IC_REMAIN


def avg_sig(preds, truths, label_names, hierarchy=None):
    """Mean scaled information gain across all examples.

    A prediction covering m of the n terminal labels scores
    (log2 n - log2 m) / log2 n when it contains the truth and 0 when it
    does not; correct terminals score 1 and the root scores 0.
    """
    n = len(label_names)
    if n < 2:
        raise ValueError("need at least 2 terminal labels")
    if not preds:
        raise ValueError("need at least one prediction")
    log_n = math.log2(n)
    total = 0.0
    for pred, truth in zip(preds, truths):
        _, size, contains, _ = _coverage(pred, truth, label_names, hierarchy)
        if contains:
            total += (log_n - math.log2(size)) / log_n
    return total / len(preds)


def topsis(criteria):
    """Closeness of a 9-criterion vector to the fixed ideal alternative.

    Distances are unweighted L2; the score is d_worst / (d_worst +
    d_best), 1 at the best anchor and 0 at the worst.
    """
    a = np.asarray(criteria, dtype=float)
    if a.shape != (9,):
        raise ValueError("TOPSIS expects exactly 9 criteria")
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError("criteria must lie in [0, 1]")
    d_best = float(np.sqrt(np.sum((a - TOPSIS_BEST) ** 2)))
    d_worst = float(np.sqrt(np.sum((a - TOPSIS_WORST) ** 2)))
    return d_worst / (d_worst + d_best)


def ece(preds, truths, label_names, threshold, hierarchy=None):
    """Expected calibration error over [threshold, 1] with 10 bins.

    Root and full-set predictions are excluded (their posterior is pinned
    to 1 by construction). Per bin the gap between the fraction of
    predictions containing their truth and the mean posterior is weighted
    by bin occupancy. Returns None when nothing is retained.
    """
    if not 0.0 <= threshold < 1.0:
        raise ValueError("ECE needs 0 <= threshold < 1")
    retained = []
    for pred, truth in zip(preds, truths):
        plays_root, _, contains, _ = _coverage(
            pred, truth, label_names, hierarchy
        )
        if not plays_root:
            retained.append((float(pred.posterior), contains))
    if not retained:
        return None
    width = (1.0 - threshold) / ECE_BINS
    hits = np.zeros(ECE_BINS)
    mass = np.zeros(ECE_BINS)
    counts = np.zeros(ECE_BINS)
    for posterior, contains in retained:
        b = int((posterior - threshold) // width)
        b = min(max(b, 0), ECE_BINS - 1)
        counts[b] += 1
        mass[b] += posterior
        hits[b] += 1.0 if contains else 0.0
    total = 0.0
    for b in range(ECE_BINS):
        if counts[b]:
            total += (counts[b] / len(retained)) * abs(
                hits[b] / counts[b] - mass[b] / counts[b]
            )
    return total


@dataclass
class MetricReport:
    """The nine criteria plus ECE and the side counts.

    Fractions are None when their side is empty; topsis is present only
    when all nine criteria are; ece is None when every prediction was
    withdrawn to the root.
    """

    n_correct: int
    n_incorrect: int
    c_persist: float | None
    c_soft: float | None
    c_withdrawn: float | None
    c_corrupt: float | None
    ic_persist: float | None
    ic_reform: float | None
    ic_remain: float | None
    ic_withdrawn: float | None
    avg_sig: float | None
    topsis: float | None
    ece: float | None

    def criteria_vector(self):
        values = [getattr(self, name) for name in CRITERIA]
        if any(v is None for v in values):
            return None
        return np.asarray(values, dtype=float)


def evaluate_predictions(preds, truths, base_preds, label_names, threshold,
                         hierarchy=None):
    """Aggregate predictions into a full metric report."""
    truths = [int(t) for t in truths]
    base_preds = [int(b) for b in base_preds]
    if not (len(preds) == len(truths) == len(base_preds)):
        raise ValueError("predictions, truths, and base predictions differ in length")

    tags = [
        classify_outcome(p, t, b, label_names, hierarchy)
        for p, t, b in zip(preds, truths, base_preds)
    ]
    n_correct = sum(1 for t, b in zip(truths, base_preds) if t == b)
    n_incorrect = len(preds) - n_correct

    def fraction(tag, total):
        if total == 0:
            return None
        return tags.count(tag) / total

    report = MetricReport(
        n_correct=n_correct,
        n_incorrect=n_incorrect,
        c_persist=fraction(C_PERSIST, n_correct),
        c_soft=fraction(C_SOFT, n_correct),
        c_withdrawn=fraction(C_WITHDRAWN, n_correct),
        c_corrupt=fraction(C_CORRUPT, n_correct),
        ic_persist=fraction(IC_PERSIST, n_incorrect),
        ic_reform=fraction(IC_REFORM, n_incorrect),
        ic_remain=fraction(IC_REMAIN, n_incorrect),
        ic_withdrawn=fraction(IC_WITHDRAWN, n_incorrect),
        avg_sig=avg_sig(preds, truths, label_names, hierarchy) if preds else None,
        topsis=None,
        # at threshold 1 everything withdraws and ECE has no domain
        ece=(
            ece(preds, truths, label_names, threshold, hierarchy)
            if preds and threshold < 1.0
            else None
        ),
    )
    vector = report.criteria_vector()
    if vector is not None:
        report.topsis = topsis(vector)
    return report


# -- report serialization -----------------------------------------------------

REPORT_FIELDS = (
    "n_correct", "n_incorrect",
    C_PERSIST, C_SOFT, C_WITHDRAWN, C_CORRUPT,
    IC_PERSIST, IC_REFORM, IC_REMAIN, IC_WITHDRAWN,
    "avg_sig", "topsis", "ece",
)


def _format_value(value):
    if value is None:
        return "absent"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def report_to_text(report):
    """key=value serialization, one field per line, canonical order."""
    return "\n".join(
        f"{name}={_format_value(getattr(report, name))}"
        for name in REPORT_FIELDS
    ) + "\n"


def report_csv_header(extra_columns=()):
    return ",".join(tuple(extra_columns) + REPORT_FIELDS)


def report_to_csv_row(report, extra_values=()):
    cells = [str(v) for v in extra_values]
    for name in REPORT_FIELDS:
        value = getattr(report, name)
        cells.append("" if value is None else _format_value(value))
    return ",".join(cells)
