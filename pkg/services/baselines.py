"""
Classical baselines on upper-triangle connectivity features.

Features are ranked by Welch's two-sample t statistic on the training folds
only, then classified with k-nearest neighbours or a ridge-regularised linear
discriminant.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from scipy import linalg, stats
from scipy.spatial.distance import cdist

from core.errors import ConfigError, DataError, StratificationError
from models.matrices import ConnectivityMatrix
from models.schemas import BaselineMethod, CrossValResult, Label
from services.evaluation import fold_result, format_metric, stratified_kfold, summarize, train_indices

logger = logging.getLogger(__name__)

DEFAULT_TOP_FEATURES = 100
DEFAULT_NEIGHBOURS = 5
RIDGE_SCALE = 1e-6


def feature_matrix(samples: Sequence[ConnectivityMatrix]) -> np.ndarray:
    return np.vstack([sample.upper_triangle() for sample in samples])


def label_indices(labels: Sequence[Label]) -> np.ndarray:
    return np.array([label.index for label in labels], dtype=np.intp)


def _require_both_classes(y: np.ndarray, what: str) -> None:
    for label in Label:
        if not np.any(y == label.index):
            raise DataError(f"{what} has no {label.value} samples")


# ── Feature selection ────────────────────────────────────────────────────────

def welch_t(features: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-feature Welch t; 0 where both classes have zero variance."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = stats.ttest_ind(features[y == 0], features[y == 1], axis=0, equal_var=False).statistic
    return np.nan_to_num(np.asarray(t, dtype=np.float64), nan=0.0, posinf=0.0, neginf=0.0)


def ttest_select(features: np.ndarray, labels: Sequence[Label], n_keep: int) -> np.ndarray:
    """Indices of the n_keep largest |t|, ties broken toward the lower index."""
    features = np.asarray(features, dtype=np.float64)
    y = label_indices(labels)
    _require_both_classes(y, "feature selection set")
    if not 0 < n_keep <= features.shape[1]:
        raise ConfigError(f"n_keep must be in [1, {features.shape[1]}], got {n_keep}")
    score = np.abs(welch_t(features, y))
    return np.argsort(-score, kind="stable")[:n_keep]


# ── Classifiers ──────────────────────────────────────────────────────────────

def knn_predict(train_x: np.ndarray, train_y: np.ndarray, test_x: np.ndarray, k: int = DEFAULT_NEIGHBOURS) -> np.ndarray:
    """Euclidean majority vote; distance ties go to the lower train index, vote ties to SZ."""
    _require_both_classes(train_y, "training set")
    if not 1 <= k <= len(train_x):
        raise ConfigError(f"k={k} neighbours with {len(train_x)} training samples")
    distances = cdist(test_x, train_x, metric="euclidean")
    nearest = np.argsort(distances, axis=1, kind="stable")[:, :k]
    votes_sz = np.sum(train_y[nearest] == Label.sz.index, axis=1)
    return np.where(2 * votes_sz >= k, Label.sz.index, Label.hc.index)


def lda_fit(train_x: np.ndarray, train_y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linear discriminant weights and offsets, one per class (class index order)."""
    _require_both_classes(train_y, "training set")
    classes = [label.index for label in Label]
    means = np.vstack([train_x[train_y == c].mean(axis=0) for c in classes])
    centered = train_x - means[train_y]
    dof = max(len(train_x) - len(classes), 1)
    cov = centered.T @ centered / dof
    dim = cov.shape[0]
    ridge = RIDGE_SCALE * np.trace(cov) / dim
    cov = cov + (ridge if ridge > 0 else RIDGE_SCALE) * np.eye(dim)
    priors = np.array([np.mean(train_y == c) for c in classes])
    weights = linalg.solve(cov, means.T, assume_a="pos")          # (dim, classes)
    offsets = -0.5 * np.sum(means.T * weights, axis=0) + np.log(priors)
    return weights, offsets


def lda_predict(train_x: np.ndarray, train_y: np.ndarray, test_x: np.ndarray) -> np.ndarray:
    weights, offsets = lda_fit(train_x, train_y)
    scores = test_x @ weights + offsets
    return np.argmax(scores, axis=1)


def baseline_classify(
    method: BaselineMethod,
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    neighbours: int = DEFAULT_NEIGHBOURS,
) -> np.ndarray:
    train_x = np.atleast_2d(np.asarray(train_x, dtype=np.float64))
    test_x = np.atleast_2d(np.asarray(test_x, dtype=np.float64))
    if train_x.shape[1] != test_x.shape[1]:
        raise DataError(f"train has {train_x.shape[1]} features, test has {test_x.shape[1]}")
    train_y = np.asarray(train_y, dtype=np.intp)
    if method == BaselineMethod.knn:
        return knn_predict(train_x, train_y, test_x, neighbours)
    return lda_predict(train_x, train_y, test_x)


# ── Cross-validation ─────────────────────────────────────────────────────────

def cross_validate_baseline(
    samples: Sequence[ConnectivityMatrix],
    method: BaselineMethod,
    k: int,
    seed: int,
    top_features: int = DEFAULT_TOP_FEATURES,
    neighbours: int = DEFAULT_NEIGHBOURS,
) -> CrossValResult:
    """Same fold plan as MKCapsnet; features are selected inside each training split."""
    labels = [sample.label for sample in samples]
    if any(label is None for label in labels):
        raise StratificationError("every sample needs a label")
    x = feature_matrix(samples)
    y = label_indices(labels)
    keep = min(top_features, x.shape[1])
    plan = stratified_kfold(labels, k, seed)

    results = []
    for fold, test in enumerate(plan.folds):
        train = train_indices(plan, fold)
        selected = ttest_select(x[train], [labels[i] for i in train], keep)
        predicted = baseline_classify(method, x[train][:, selected], y[train], x[test][:, selected], neighbours)
        result = fold_result(fold, [labels[i] for i in test], [Label.from_index(int(p)) for p in predicted])
        logger.info("%s fold %d: accuracy %s", method.value, fold, format_metric(result.metrics.accuracy))
        results.append(result)
    return summarize(results)
