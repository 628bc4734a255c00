"""Command-line pipeline around the calibration toolkit.

Subcommands: fit, infer, evaluate, sweep, loocv, synth, shuffle-tree.
Every option can also come from a key=value config file (--config); flags
given on the command line win. Commands are deterministic under a fixed
seed, exit non-zero on any error, and remove the files they were writing
when they fail. The HIERCAL_JOBS environment variable sets the degree of
parallelism for the level search and the sweep grid.
"""

from __future__ import annotations

import argparse
import os
import sys

from joblib import Parallel, delayed

from .calibration import fit_estimators, load_model, write_model
from .compression import LEVEL_FREE_SCHEMES, fit_compressor
from .dataset import (
    SyntheticConfig,
    dump_dataset,
    generate_synthetic,
    load_dataset_file,
    partition_by_prediction,
    predicted_labels,
    subsample_per_class,
)
from .hierarchy import load_hierarchy
from .inference import infer_many, predictions_from_csv, predictions_to_csv
from .metrics import evaluate_predictions, report_csv_header, report_to_csv_row, report_to_text
from .selection import loocv_select, search_to_csv

ENV_JOBS = "HIERCAL_JOBS"

# Option types for config-file parsing, keyed by argparse dest.
_OPTION_TYPES = {
    "classes": int, "dim": int, "val_per_class": int, "test_per_class": int,
    "seed": int, "folds": int, "superclass_size": int,
    "mean_scale": float, "distort_temperature": float, "distort_bias": float,
    "threshold": float,
}

_DEFAULTS = {
    "scheme": "confusion", "mode": "tree", "threshold": 0.9, "seed": 0,
    "classes": 5, "dim": 4, "val_per_class": 100, "test_per_class": 100,
    "mean_scale": 2.0, "distort_temperature": 1.0, "distort_bias": 0.0,
    "superclass_size": 2, "schemes": "confusion",
}


def _jobs():
    return int(os.environ.get(ENV_JOBS, "1"))


class _Outputs:
    """Tracks files written by the running command for failure cleanup."""

    def __init__(self):
        self.paths = []

    def write(self, path, text):
        self.paths.append(path)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)

    def discard_all(self):
        for path in self.paths:
            try:
                os.unlink(path)
            except OSError:
                pass


def _read_config(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"config line without '=': {line!r}")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _merge_options(ns):
    """Overlay config-file values and defaults under explicit flags."""
    if getattr(ns, "config", None):
        for key, raw in _read_config(ns.config).items():
            if getattr(ns, key, None) is None and hasattr(ns, key):
                setattr(ns, key, _OPTION_TYPES.get(key, str)(raw))
    for key, value in _DEFAULTS.items():
        if hasattr(ns, key) and getattr(ns, key) is None:
            setattr(ns, key, value)


def _require(ns, *keys):
    for key in keys:
        if getattr(ns, key, None) is None:
            raise ValueError(f"missing required option --{key.replace('_', '-')}")


def _parse_level(text):
    if text is None or text == "auto":
        return text
    return int(text)


def _load_hierarchy_if_given(ns):
    return load_hierarchy(ns.hierarchy) if ns.hierarchy else None


def _check_compatible(model, dataset):
    if model.label_names != dataset.label_names:
        raise ValueError(
            "model and dataset disagree on the label set or its order"
        )


def _fit_model(dataset, scheme, level, hierarchy, threshold, mode, folds):
    if level == "auto":
        if scheme in LEVEL_FREE_SCHEMES:
            raise ValueError(f"scheme {scheme!r} has no level to select")
        search = loocv_select(
            dataset, scheme=scheme, threshold=threshold, mode=mode,
            hierarchy=hierarchy, folds=folds, n_jobs=_jobs(),
        )
        level = search.chosen
    compressor = fit_compressor(scheme, dataset, level=level, hierarchy=hierarchy)
    return fit_estimators(dataset, compressor), level


# -- commands -----------------------------------------------------------------


def cmd_fit(ns, out):
    _require(ns, "val", "out")
    dataset = load_dataset_file(ns.val)
    hierarchy = _load_hierarchy_if_given(ns)
    model, level = _fit_model(
        dataset, ns.scheme, _parse_level(ns.level), hierarchy,
        ns.threshold, ns.mode, ns.folds,
    )
    out.write(ns.out, write_model(model))
    sizes = partition_by_prediction(dataset)
    for i, name in enumerate(dataset.label_names):
        print(f"V[{name}]={sizes[i].size}")
    print(f"fallback_labels={len(model.fallback)}")
    if level is not None:
        print(f"level={level}")
    print(f"model={ns.out}")


def cmd_infer(ns, out):
    _require(ns, "model", "test", "out")
    model = load_model(ns.model)
    dataset = load_dataset_file(ns.test)
    _check_compatible(model, dataset)
    hierarchy = _load_hierarchy_if_given(ns)
    preds = infer_many(
        model, dataset.logits, ns.threshold, mode=ns.mode, hierarchy=hierarchy
    )
    out.write(ns.out, predictions_to_csv(preds))
    print(f"predictions={ns.out} rows={len(preds)}")


def cmd_evaluate(ns, out):
    _require(ns, "predictions", "test", "out")
    dataset = load_dataset_file(ns.test)
    preds = predictions_from_csv(_read_text(ns.predictions))
    if len(preds) != len(dataset):
        raise ValueError("predictions and test set differ in length")
    hierarchy = _load_hierarchy_if_given(ns)
    report = evaluate_predictions(
        preds, dataset.labels, predicted_labels(dataset),
        dataset.label_names, ns.threshold, hierarchy,
    )
    out.write(ns.out, report_to_text(report))
    if ns.csv_out:
        out.write(
            ns.csv_out,
            report_csv_header() + "\n" + report_to_csv_row(report) + "\n",
        )
    print(f"report={ns.out}")


def _sweep_cell(val, test, scheme, size, level, seed, threshold, mode, hierarchy):
    subset = subsample_per_class(val, size, seed)
    compressor = fit_compressor(scheme, subset, level=level, hierarchy=hierarchy)
    model = fit_estimators(subset, compressor)
    preds = infer_many(model, test.logits, threshold, mode=mode, hierarchy=hierarchy)
    report = evaluate_predictions(
        preds, test.labels, predicted_labels(test),
        test.label_names, threshold, hierarchy,
    )
    return report.topsis, report.ece


def cmd_sweep(ns, out):
    _require(ns, "val", "test", "out", "sizes")
    val = load_dataset_file(ns.val)
    test = load_dataset_file(ns.test)
    hierarchy = _load_hierarchy_if_given(ns)
    schemes = [s.strip() for s in ns.schemes.split(",") if s.strip()]
    sizes = [int(s) for s in ns.sizes.split(",")]
    levels = [int(s) for s in ns.levels.split(",")] if ns.levels else []

    grid = []
    for scheme in schemes:
        cell_levels = [None] if scheme in LEVEL_FREE_SCHEMES else levels
        if not cell_levels:
            raise ValueError(f"scheme {scheme!r} requires --levels")
        for size in sizes:
            for level in cell_levels:
                grid.append((scheme, size, level))

    results = Parallel(n_jobs=_jobs())(
        delayed(_sweep_cell)(
            val, test, scheme, size, level, ns.seed, ns.threshold,
            ns.mode, hierarchy,
        )
        for scheme, size, level in grid
    )
    lines = ["scheme,val_size,level,topsis,ece"]
    for (scheme, size, level), (topsis, ece) in zip(grid, results):
        lines.append(
            f"{scheme},{size},{'' if level is None else level},"
            f"{'' if topsis is None else repr(float(topsis))},"
            f"{'' if ece is None else repr(float(ece))}"
        )
    out.write(ns.out, "\n".join(lines) + "\n")
    print(f"sweep={ns.out} rows={len(grid)}")


def cmd_loocv(ns, out):
    _require(ns, "val", "out")
    dataset = load_dataset_file(ns.val)
    hierarchy = _load_hierarchy_if_given(ns)
    candidates = (
        [int(c) for c in ns.candidates.split(",")] if ns.candidates else None
    )
    result = loocv_select(
        dataset, scheme=ns.scheme, candidates=candidates,
        threshold=ns.threshold, mode=ns.mode, hierarchy=hierarchy,
        folds=ns.folds, n_jobs=_jobs(),
    )
    out.write(ns.out, search_to_csv(result))
    print(f"chosen_level={result.chosen}")


def _posterior_csv(dataset, posteriors):
    lines = ["label," + ",".join(dataset.label_names)]
    for truth, row in zip(dataset.labels, posteriors):
        lines.append(
            dataset.label_names[truth] + ","
            + ",".join(repr(float(v)) for v in row)
        )
    return "\n".join(lines) + "\n"


def _contiguous_hierarchy(label_names, group_size):
    lines = ["terminals: " + ",".join(label_names)]
    if group_size <= 1:
        for name in label_names:
            lines.append(f"{name}\troot")
    else:
        for start in range(0, len(label_names), group_size):
            group = f"g{start // group_size}"
            lines.append(f"{group}\troot")
            for name in label_names[start:start + group_size]:
                lines.append(f"{name}\t{group}")
    return "\n".join(lines) + "\n"


def cmd_synth(ns, out):
    _require(ns, "out_dir")
    os.makedirs(ns.out_dir, exist_ok=True)
    config = SyntheticConfig(
        n_classes=ns.classes,
        dim=ns.dim,
        val_per_class=ns.val_per_class,
        test_per_class=ns.test_per_class,
        mean_scale=ns.mean_scale,
        distort_temperature=ns.distort_temperature,
        distort_bias=ns.distort_bias,
    )
    split = generate_synthetic(config, ns.seed)
    paths = {
        "val.csv": dump_dataset(split.val),
        "test.csv": dump_dataset(split.test),
        "oracle_val.csv": _posterior_csv(split.val, split.val_posteriors),
        "oracle_test.csv": _posterior_csv(split.test, split.test_posteriors),
        "hierarchy.txt": _contiguous_hierarchy(
            split.val.label_names, ns.superclass_size
        ),
    }
    for name, text in paths.items():
        out.write(os.path.join(ns.out_dir, name), text)
    print(f"synth={ns.out_dir} classes={ns.classes} seed={ns.seed}")


def cmd_shuffle_tree(ns, out):
    _require(ns, "hierarchy", "out")
    hierarchy = load_hierarchy(ns.hierarchy)
    out.write(ns.out, hierarchy.shuffle_terminals(ns.seed).to_text())
    print(f"shuffled={ns.out} seed={ns.seed}")


def _read_text(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


# -- argument wiring -----------------------------------------------------------


def _add_common(sub):
    sub.add_argument("--config", help="key=value options file; flags override")
    sub.add_argument("--hierarchy", help="hierarchy file path")
    sub.add_argument("--threshold", type=float)
    sub.add_argument("--mode", choices=["tree", "set"])
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out", help="output file path")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hiercal",
        description="Calibrated bottom-up hierarchical classification "
                    "from flat-classifier logits.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("fit", help="fit a posterior model on validation logits")
    _add_common(p)
    p.add_argument("--val", help="validation logit CSV")
    p.add_argument("--scheme")
    p.add_argument("--level", help="compression level or 'auto'")
    p.add_argument("--folds", type=int, help="k-fold level search instead of LOO")
    p.set_defaults(func=cmd_fit)

    p = subs.add_parser("infer", help="hierarchical predictions for test logits")
    _add_common(p)
    p.add_argument("--model", help="model file from 'fit'")
    p.add_argument("--test", help="test logit CSV")
    p.set_defaults(func=cmd_infer)

    p = subs.add_parser("evaluate", help="score a predictions file")
    _add_common(p)
    p.add_argument("--predictions", help="predictions CSV from 'infer'")
    p.add_argument("--test", help="test logit CSV with ground truth")
    p.add_argument("--csv-out", dest="csv_out", help="also write a one-row CSV")
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("sweep", help="grid over schemes, sizes, and levels")
    _add_common(p)
    p.add_argument("--val", help="validation logit CSV")
    p.add_argument("--test", help="test logit CSV")
    p.add_argument("--schemes", help="comma-separated scheme list")
    p.add_argument("--sizes", help="comma-separated per-class validation sizes")
    p.add_argument("--levels", help="comma-separated compression levels")
    p.set_defaults(func=cmd_sweep)

    p = subs.add_parser("loocv", help="select the compression level by LOOCV")
    _add_common(p)
    p.add_argument("--val", help="validation logit CSV")
    p.add_argument("--scheme")
    p.add_argument("--candidates", help="comma-separated candidate levels")
    p.add_argument("--folds", type=int, help="approximate k-fold mode")
    p.set_defaults(func=cmd_loocv)

    p = subs.add_parser("synth", help="generate a synthetic benchmark")
    _add_common(p)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--classes", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--val-per-class", dest="val_per_class", type=int)
    p.add_argument("--test-per-class", dest="test_per_class", type=int)
    p.add_argument("--mean-scale", dest="mean_scale", type=float)
    p.add_argument("--distort-temperature", dest="distort_temperature", type=float)
    p.add_argument("--distort-bias", dest="distort_bias", type=float)
    p.add_argument("--superclass-size", dest="superclass_size", type=int)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("shuffle-tree", help="permute terminal positions")
    _add_common(p)
    p.set_defaults(func=cmd_shuffle_tree)

    return parser


def main(argv=None):
    ns = build_parser().parse_args(argv)
    _merge_options(ns)
    out = _Outputs()
    try:
        ns.func(ns, out)
    except Exception as exc:
        out.discard_all()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
