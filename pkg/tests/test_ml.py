"""Classifiers, cross-validation and feature ranking."""

import numpy as np
import pytest

from gaitfusion.errors import ConfigError, ValidationError
from gaitfusion.ml import (LabeledDataset, Metrics, MinMaxScaler, MlConfig,
                           MlpClassifier, RandomForest, SvmClassifier,
                           classification_metrics, confusion_matrix,
                           cross_validate, evaluate_all, rank_features,
                           select_top, stratified_folds)


def blobs(n_per=30, spread=0.35, seed=0, n_classes=3, d=4):
    """Well-separated Gaussian clusters; trivially learnable."""
    rng = np.random.default_rng(seed)
    X, y = [], []
    for c in range(n_classes):
        centre = np.zeros(d)
        centre[c % d] = 2.0 * (1 + c)
        X.append(rng.normal(centre, spread, (n_per, d)))
        y.append(np.full(n_per, c))
    names = tuple(f"f{i}" for i in range(d))
    classes = tuple(f"c{i}" for i in range(n_classes))
    return LabeledDataset(np.vstack(X), np.concatenate(y), names, classes)


def test_dataset_validation():
    with pytest.raises(ValidationError):
        LabeledDataset(np.zeros((4, 2)), np.zeros(3), ("a", "b"), ("x", "y"))
    with pytest.raises(ValidationError):
        LabeledDataset(np.zeros((4, 2)), np.array([0, 0, 1, 2]),
                       ("a", "b"), ("x", "y"))


def test_minmax_scaler_maps_training_range_to_unit():
    X = np.array([[0.0, 5.0], [2.0, 5.0], [4.0, 5.0]])
    s = MinMaxScaler().fit(X)
    out = s.transform(X)
    np.testing.assert_allclose(out[:, 0], [0.0, 0.5, 1.0])
    np.testing.assert_allclose(out[:, 1], 0.0)       # constant column
    beyond = s.transform(np.array([[8.0, 7.0]]))
    assert beyond[0, 0] == pytest.approx(2.0)


def test_confusion_matrix_and_hand_metrics():
    c = confusion_matrix([0, 0, 1, 1], [0, 1, 1, 1], 2)
    np.testing.assert_array_equal(c, [[1, 1], [0, 2]])
    m = classification_metrics(np.array([[50, 10], [5, 35]]))
    assert m.accuracy == pytest.approx(85.0 / 100.0)
    assert m.precision == pytest.approx(0.5 * (50.0 / 55.0 + 35.0 / 45.0))
    assert m.recall == pytest.approx(0.5 * (50.0 / 60.0 + 35.0 / 40.0))
    p1, r1 = 50.0 / 55.0, 50.0 / 60.0
    p2, r2 = 35.0 / 45.0, 35.0 / 40.0
    f1 = 0.5 * (2 * p1 * r1 / (p1 + r1) + 2 * p2 * r2 / (p2 + r2))
    assert m.f1 == pytest.approx(f1)


def test_never_predicted_class_scores_zero_precision():
    m = classification_metrics(np.array([[4, 0], [2, 0]]))
    assert m.precision == pytest.approx(0.5 * (4.0 / 6.0 + 0.0))
    with pytest.raises(ValidationError):
        classification_metrics(np.zeros((2, 2)))


def test_stratified_folds_partition_and_balance():
    y = np.array([0] * 12 + [1] * 18)
    folds = stratified_folds(y, 5, seed=3)
    assert sorted(np.concatenate(folds).tolist()) == list(range(30))
    for f in folds:
        zeros = int(np.sum(y[f] == 0))
        assert 2 <= zeros <= 3                     # 12 zeros over 5 folds
    with pytest.raises(ValidationError):
        stratified_folds(np.array([0, 1, 0, 1]), 5, seed=0)


def test_random_forest_learns_blobs_and_is_deterministic():
    ds = blobs()
    a = RandomForest(3, n_trees=40, seed=5).fit(ds.X, ds.y)
    b = RandomForest(3, n_trees=40, seed=5).fit(ds.X, ds.y)
    assert np.array_equal(a.predict(ds.X), b.predict(ds.X))
    np.testing.assert_allclose(a.feature_importances_, b.feature_importances_)
    assert np.mean(a.predict(ds.X) == ds.y) == 1.0
    assert a.feature_importances_.sum() == pytest.approx(1.0)
    assert np.all(a.feature_importances_ >= 0.0)


def test_perfect_feature_dominates_importance():
    rng = np.random.default_rng(6)
    n = 120
    X = rng.standard_normal((n, 5))
    y = (X[:, 2] > 0.0).astype(int)
    ranks = rank_features(
        LabeledDataset(X, y, tuple("abcde"), ("lo", "hi")),
        MlConfig(n_trees=60, seed=1))
    assert ranks[0].index == 2
    assert ranks[0].importance > 0.5
    assert abs(ranks[0].correlation) > 0.5


def test_noise_features_share_importance():
    totals = np.zeros(6)
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        X = rng.standard_normal((90, 6))
        y = rng.integers(0, 2, 90)
        ds = LabeledDataset(X, y, tuple(f"n{i}" for i in range(6)),
                            ("a", "b"))
        rf = RandomForest(2, n_trees=30, seed=seed).fit(ds.X, ds.y)
        totals += rf.feature_importances_
    assert totals.max() < 3.0 * totals.min()


def test_svm_learns_xor():
    rng = np.random.default_rng(7)
    X = rng.uniform(-1.0, 1.0, (160, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    clf = SvmClassifier(2, c=5.0, gamma=4.0, seed=0).fit(X, y)
    assert np.mean(clf.predict(X) == y) >= 0.95


def test_svm_one_vs_rest_on_three_classes():
    ds = blobs(seed=8)
    clf = SvmClassifier(3, c=2.0).fit(ds.X, ds.y)
    assert np.mean(clf.predict(ds.X) == ds.y) >= 0.97


def test_mlp_converges_on_separable_data():
    ds = blobs(seed=9, n_per=20)
    clf = MlpClassifier(3, hidden=12, lr=0.3, epochs=800, seed=2)
    clf.fit(ds.X, ds.y)
    assert np.mean(clf.predict(ds.X) == ds.y) == 1.0
    assert np.isfinite(clf.final_loss)


def test_cross_validate_pools_every_sample_once():
    ds = blobs(n_per=20, seed=10)
    res = cross_validate(ds, "rf", MlConfig(n_trees=30, cv_folds=5))
    assert res.confusion.sum() == len(ds.y)
    assert res.metrics.accuracy >= 0.9
    assert len(res.fold_accuracy) == 5
    again = cross_validate(ds, "rf", MlConfig(n_trees=30, cv_folds=5))
    np.testing.assert_array_equal(res.confusion, again.confusion)


def test_cross_validate_metrics_match_pooled_confusion():
    ds = blobs(n_per=15, seed=11, spread=1.2)
    res = cross_validate(ds, "svm", MlConfig(cv_folds=4))
    recomputed = classification_metrics(res.confusion)
    assert res.metrics == Metrics(recomputed.accuracy, recomputed.precision,
                                  recomputed.recall, recomputed.f1)


def test_global_normalization_variant_runs():
    ds = blobs(n_per=15, seed=12)
    per_fold = cross_validate(ds, "mlp",
                              MlConfig(cv_folds=3, mlp_epochs=300))
    global_ = cross_validate(ds, "mlp",
                             MlConfig(cv_folds=3, mlp_epochs=300,
                                      normalize_scope="global_fit"))
    assert per_fold.confusion.sum() == global_.confusion.sum() == len(ds.y)


def test_evaluate_all_covers_requested_classifiers():
    ds = blobs(n_per=12, seed=13)
    out = evaluate_all(ds, MlConfig(cv_folds=3, n_trees=20, mlp_epochs=200))
    assert set(out) == {"rf", "svm", "mlp"}
    for name, res in out.items():
        assert res.classifier == name
        assert 0.0 <= res.metrics.accuracy <= 1.0


def test_unknown_classifier_rejected():
    ds = blobs(n_per=12, seed=14)
    with pytest.raises(ConfigError):
        cross_validate(ds, "xgboost", MlConfig(cv_folds=3))


def test_select_top_keeps_column_order():
    ds = blobs(n_per=20, seed=15, d=6)
    ranks = rank_features(ds, MlConfig(n_trees=30))
    top = select_top(ds, ranks, 3)
    assert top.X.shape == (len(ds.y), 3)
    kept = [ds.feature_names.index(n) for n in top.feature_names]
    assert kept == sorted(kept)
    top_names = {r.name for r in ranks[:3]}
    assert set(top.feature_names) == top_names


def test_rank_features_sorted_by_importance():
    ds = blobs(n_per=20, seed=16)
    ranks = rank_features(ds, MlConfig(n_trees=30))
    imps = [r.importance for r in ranks]
    assert imps == sorted(imps, reverse=True)
    assert sum(imps) == pytest.approx(1.0)


def test_ml_config_validation():
    with pytest.raises(ConfigError):
        MlConfig(cv_folds=1)
    with pytest.raises(ConfigError):
        MlConfig(normalize_scope="standard")
    with pytest.raises(ConfigError):
        MlConfig(classifiers=("rf", "lda"))
