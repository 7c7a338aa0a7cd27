import numpy as np
import pytest

from core.errors import ConfigError, DataError
from models.schemas import BaselineMethod, Label
from services.baselines import (
    baseline_classify, cross_validate_baseline, feature_matrix, knn_predict, lda_predict, ttest_select, welch_t,
)

SZ, HC = Label.sz.index, Label.hc.index


def labels(n_sz, n_hc):
    return [Label.sz] * n_sz + [Label.hc] * n_hc


# ── t-test selection ─────────────────────────────────────────────────────────

def test_informative_feature_ranked_first():
    rng = np.random.default_rng(0)
    noise = rng.normal(size=(20, 30))
    signal = np.concatenate([1.0 + 0.1 * rng.standard_normal(10), -1.0 + 0.1 * rng.standard_normal(10)])
    features = np.column_stack([noise[:, :7], signal, noise[:, 7:]])
    assert ttest_select(features, labels(10, 10), 1).tolist() == [7]


def test_constant_feature_ranked_last():
    rng = np.random.default_rng(1)
    features = rng.normal(size=(12, 5))
    features[:, 2] = 3.0
    ranked = ttest_select(features, labels(6, 6), 5)
    assert ranked[-1] == 2
    assert welch_t(features, np.array([SZ] * 6 + [HC] * 6))[2] == 0.0


def test_keep_all_is_identity_set():
    features = np.random.default_rng(2).normal(size=(8, 6))
    assert sorted(ttest_select(features, labels(4, 4), 6).tolist()) == list(range(6))


def test_ties_prefer_lower_index():
    column = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    features = np.column_stack([column, column, column])
    assert ttest_select(features, labels(3, 3), 2).tolist() == [0, 1]


def test_selection_scale_invariant():
    rng = np.random.default_rng(3)
    features = rng.normal(size=(16, 10))
    features[:8, 4] += 1.5
    scaled = features.copy()
    scaled[:, 4] *= 37.0
    assert ttest_select(features, labels(8, 8), 3).tolist() == ttest_select(scaled, labels(8, 8), 3).tolist()


def test_selection_needs_both_classes():
    with pytest.raises(DataError):
        ttest_select(np.zeros((4, 3)), labels(4, 0), 1)


def test_too_many_features_requested():
    with pytest.raises(ConfigError):
        ttest_select(np.random.default_rng(4).normal(size=(4, 3)), labels(2, 2), 4)


# ── classifiers ──────────────────────────────────────────────────────────────

def test_one_nn_duplicate_point():
    train = np.array([[0.0, 0.0], [5.0, 5.0], [0.0, 5.0]])
    y = np.array([SZ, HC, HC])
    assert knn_predict(train, y, np.array([[5.0, 5.0]]), k=1).tolist() == [HC]


def test_knn_full_train_is_majority():
    rng = np.random.default_rng(5)
    train = rng.normal(size=(7, 3))
    y = np.array([HC, HC, HC, HC, SZ, SZ, SZ])
    assert set(knn_predict(train, y, rng.normal(size=(10, 3)), k=7).tolist()) == {HC}


def test_knn_vote_tie_goes_to_sz():
    train = np.array([[0.0], [1.0]])
    assert knn_predict(train, np.array([HC, SZ]), np.array([[0.4]]), k=2).tolist() == [SZ]


def test_knn_invariant_under_rotation():
    rng = np.random.default_rng(6)
    train, test = rng.normal(size=(20, 3)), rng.normal(size=(5, 3))
    y = np.array([SZ, HC] * 10)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    shift = rng.normal(size=3)
    np.testing.assert_array_equal(knn_predict(train, y, test, 3), knn_predict(train @ q + shift, y, test @ q + shift, 3))


def test_knn_errors():
    with pytest.raises(ConfigError):
        knn_predict(np.zeros((2, 1)), np.array([SZ, HC]), np.zeros((1, 1)), k=3)
    with pytest.raises(DataError):
        knn_predict(np.zeros((2, 1)), np.array([SZ, SZ]), np.zeros((1, 1)), k=1)


def test_lda_midpoint_threshold():
    train = np.array([[-0.5], [0.5], [1.5], [2.5]])
    y = np.array([SZ, SZ, HC, HC])
    assert lda_predict(train, y, np.array([[0.99], [1.01]])).tolist() == [SZ, HC]


def test_baseline_classify_checks_feature_count():
    with pytest.raises(DataError):
        baseline_classify(BaselineMethod.lda, np.zeros((4, 2)), np.array([SZ, SZ, HC, HC]), np.zeros((1, 3)))


# ── cross-validation ─────────────────────────────────────────────────────────

@pytest.mark.parametrize("method", list(BaselineMethod))
def test_baseline_cv_on_separable_data(small_dataset, method):
    result = cross_validate_baseline(small_dataset, method, k=3, seed=0, top_features=5, neighbours=3)
    assert result.pooled_confusion.total == len(small_dataset)
    assert result.pooled.accuracy >= 0.8


def test_feature_matrix_is_upper_triangle(small_dataset):
    assert feature_matrix(small_dataset).shape == (len(small_dataset), 8 * 7 // 2)
