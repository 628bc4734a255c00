"""Compression-level selection by class-wise cross validation.

Every candidate level is scored by refitting the full estimator grid with
each fold held out, running inference on the held-out records, and
aggregating all held-out predictions into one metric report; the level
with the highest TOPSIS wins, ties going to the smaller level. Full
leave-one-out uses one fold per record; the opt-in k-fold mode trades
fidelity for runtime and is flagged as approximate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .calibration import fit_estimators
from .compression import fit_compressor
from .dataset import DatasetError, predicted_labels
from .inference import infer_set, infer_tree
from .metrics import evaluate_predictions


@dataclass(frozen=True)
class LevelSearchResult:
    """Per-level scores plus the selected level.

    ``scores`` aligns with ``levels``; a score is None when the metric
    report for that level was degenerate (one outcome side empty).
    """

    levels: tuple
    scores: tuple
    chosen: int
    approximate: bool = False


def choose_level(levels, scores):
    """Highest-scoring level; exact ties resolve to the smaller level."""
    viable = [(lv, sc) for lv, sc in zip(levels, scores) if sc is not None]
    if not viable:
        raise ValueError("no candidate level produced a full metric report")
    best_score = max(sc for _, sc in viable)
    return min(lv for lv, sc in viable if sc == best_score)


def default_candidates(dataset):
    """1 .. min(label count, smallest per-class record count)."""
    counts = np.bincount(dataset.labels, minlength=dataset.n_labels)
    upper = min(dataset.n_labels, int(counts.min()))
    return tuple(range(1, max(upper, 1) + 1))


def _fold_indices(dataset, folds):
    """Held-out index groups, iterated class-wise in dataset order.

    ``folds=None`` yields singleton folds (leave-one-out); an integer k
    assigns within-class ordinal r to fold r mod k, so folds stay
    class-balanced.
    """
    by_class = [
        np.flatnonzero(dataset.labels == j) for j in range(dataset.n_labels)
    ]
    if folds is None:
        return [np.asarray([r]) for idx in by_class for r in idx]
    k = int(folds)
    if k < 2:
        raise ValueError("k-fold mode needs at least 2 folds")
    groups = [[] for _ in range(k)]
    for idx in by_class:
        for ordinal, r in enumerate(idx):
            groups[ordinal % k].append(r)
    return [np.asarray(g) for g in groups if g]


def _held_out_predictions(dataset, held_out, scheme, level, threshold, mode,
                          hierarchy):
    train_mask = np.ones(len(dataset), dtype=bool)
    train_mask[held_out] = False
    train = dataset.subset(np.flatnonzero(train_mask))
    compressor = fit_compressor(scheme, train, level=level, hierarchy=hierarchy)
    model = fit_estimators(train, compressor)
    preds = []
    for r in held_out:
        row = dataset.logits[r]
        if mode == "tree":
            preds.append(infer_tree(model, hierarchy, row, threshold))
        else:
            preds.append(infer_set(model, row, threshold))
    return list(held_out), preds


def loocv_select(dataset, scheme="confusion", candidates=None, threshold=0.9,
                 mode="tree", hierarchy=None, folds=None, n_jobs=1):
    """Score candidate compression levels and pick the best.

    Requires at least 2 records per class so every training split keeps
    each class populated. Deterministic given the dataset order; parallel
    execution (``n_jobs``) merges fold results in (level, fold) order.
    """
    counts = np.bincount(dataset.labels, minlength=dataset.n_labels)
    if counts.min() < 2:
        short = dataset.label_names[int(np.argmin(counts))]
        raise DatasetError(f"label {short!r} has fewer than 2 validation records")
    if mode == "tree" and hierarchy is None:
        raise ValueError("tree mode requires a hierarchy")
    if candidates is None:
        candidates = default_candidates(dataset)
    candidates = tuple(int(c) for c in candidates)

    fold_groups = _fold_indices(dataset, folds)
    jobs = [(level, held) for level in candidates for held in fold_groups]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_held_out_predictions)(
            dataset, held, scheme, level, threshold, mode, hierarchy
        )
        for level, held in jobs
    )

    base = predicted_labels(dataset)
    scores = []
    cursor = 0
    for level in candidates:
        preds, truths, bases = [], [], []
        for _ in fold_groups:
            held, fold_preds = results[cursor]
            cursor += 1
            preds.extend(fold_preds)
            truths.extend(int(dataset.labels[r]) for r in held)
            bases.extend(int(base[r]) for r in held)
        report = evaluate_predictions(
            preds, truths, bases, dataset.label_names, threshold, hierarchy
        )
        scores.append(report.topsis)
    return LevelSearchResult(
        levels=candidates,
        scores=tuple(scores),
        chosen=choose_level(candidates, scores),
        approximate=folds is not None,
    )


def search_to_csv(result):
    """CSV of per-level scores with the chosen level marked."""
    lines = ["level,topsis,chosen,approximate"]
    approx = "true" if result.approximate else "false"
    for level, score in zip(result.levels, result.scores):
        value = "" if score is None else repr(float(score))
        chosen = "true" if level == result.chosen else "false"
        lines.append(f"{level},{value},{chosen},{approx}")
    return "\n".join(lines) + "\n"
