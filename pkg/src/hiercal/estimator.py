"""Scikit-learn style front end for the calibration pipeline.

``HierarchicalCalibrator`` is fit on validation logits plus ground-truth
terminal indices and then maps test logits to calibrated terminal
posteriors (``predict_proba``) or hierarchical predictions (``predict``).
It follows the estimator protocol (get_params/set_params, attributes with
trailing underscores, NotFittedError before fit) so it composes with the
usual tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .calibration import fit_estimators
from .compression import LEVEL_FREE_SCHEMES, SCHEMES, fit_compressor
from .dataset import LogitDataset
from .inference import infer_many
from .selection import loocv_select


class HierarchicalCalibrator(BaseEstimator):
    """Posterior calibration plus bottom-up hierarchical inference.

    Parameters
    ----------
    scheme : str
        Compression scheme: "confusion", "pca-global", "pca-local",
        "tree", "single-logit", or "none".
    level : int, "auto", or None
        Compressed dimensionality; "auto" selects it by class-wise
        cross validation on the fit data. Must be None for schemes with
        intrinsic dimensionality (tree, single-logit, none).
    threshold : float
        Confidence threshold for hierarchical inference, in [0, 1].
    mode : str
        "tree" walks the label hierarchy; "set" accumulates sorted
        posteriors without one.
    hierarchy : LabelHierarchy or None
        Required for mode="tree" and scheme="tree"; also supplies the
        label names.
    cv_folds : int or None
        None runs full leave-one-out during level="auto"; an integer k
        switches to the approximate class-wise k-fold search.
    n_jobs : int
        Parallelism for the level search.

    Attributes
    ----------
    model_ : PosteriorModel
        Fitted estimator grid with its compressor.
    level_ : int or None
        The level actually used (resolved when level="auto").
    classes_ : ndarray
        Terminal label indices 0..|C|-1.
    """

    def __init__(self, scheme="confusion", level=None, threshold=0.9,
                 mode="tree", hierarchy=None, cv_folds=None, n_jobs=1):
        self.scheme = scheme
        self.level = level
        self.threshold = threshold
        self.mode = mode
        self.hierarchy = hierarchy
        self.cv_folds = cv_folds
        self.n_jobs = n_jobs

    def _validate_params(self, n_labels):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.mode not in ("tree", "set"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "tree" and self.hierarchy is None:
            raise ValueError("mode='tree' requires a hierarchy")
        if self.scheme == "tree" and self.hierarchy is None:
            raise ValueError("scheme='tree' requires a hierarchy")
        if self.hierarchy is not None and self.hierarchy.n_terminals != n_labels:
            raise ValueError("hierarchy terminal count does not match the data")

    def fit(self, X, y):
        """Fit compression and the posterior estimator grid.

        X is the (n, |C|) validation logit matrix; y holds ground-truth
        terminal indices.
        """
        X = check_array(X, dtype=float)
        y = np.asarray(y, dtype=int).reshape(-1)
        self._validate_params(X.shape[1])
        names = (
            self.hierarchy.terminals
            if self.hierarchy is not None
            else tuple(str(k) for k in range(X.shape[1]))
        )
        data = LogitDataset(names, X, y)

        level = self.level
        if level == "auto":
            if self.scheme in LEVEL_FREE_SCHEMES:
                raise ValueError(
                    f"scheme {self.scheme!r} has no level to select"
                )
            search = loocv_select(
                data,
                scheme=self.scheme,
                threshold=self.threshold,
                mode=self.mode,
                hierarchy=self.hierarchy,
                folds=self.cv_folds,
                n_jobs=self.n_jobs,
            )
            self.search_ = search
            level = search.chosen

        compressor = fit_compressor(
            self.scheme, data, level=level, hierarchy=self.hierarchy
        )
        self.model_ = fit_estimators(data, compressor)
        self.level_ = level
        self.classes_ = np.arange(X.shape[1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        """Calibrated L1-normalized terminal posteriors, shape (n, |C|)."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} columns, model expects {self.n_features_in_}"
            )
        return np.vstack([self.model_.terminal_posteriors(row) for row in X])

    def predict(self, X):
        """Hierarchical predictions, one per row of X."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} columns, model expects {self.n_features_in_}"
            )
        return infer_many(
            self.model_, X, self.threshold, mode=self.mode,
            hierarchy=self.hierarchy,
        )
