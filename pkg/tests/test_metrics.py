"""Evaluation reports, confusion estimation, and classifier distances."""

import math

import numpy as np
import pytest

from unconfused.errors import (
    DimensionMismatchError,
    EmptyTestSetError,
    MissingLabelsError,
)
from unconfused.metrics import (
    DegradedEstimate,
    EvalReport,
    dist_classwise,
    dist_confusion,
    dist_couplewise,
    dist_error,
    estimate_confusion_from_pairs,
    evaluate,
    load_report_json,
    report_as_dict,
    report_from_dict,
    save_report_json,
)
from unconfused.problem import (
    MISSING,
    ConfusionMatrix,
    LabeledDataset,
    LinearModel,
    predict_batch,
)
from unconfused.rng import RngStream
from unconfused.synthgen import SynthConfig, generate_concept, generate_dataset


def dataset(q, features, true_labels):
    feats = np.asarray(features, dtype=np.float64)
    true = np.asarray(true_labels, dtype=np.int64)
    return LabeledDataset(q, feats, true,
                          np.full(true.shape, MISSING, dtype=np.int64))


def pairs_dataset(q, true_labels, noisy_labels):
    true = np.asarray(true_labels, dtype=np.int64)
    feats = np.zeros((true.size, 2))
    feats[:, 0] = 1.0
    return LabeledDataset(q, feats, true,
                          np.asarray(noisy_labels, dtype=np.int64))


# ---------------------------------------------------------------------------
# evaluate


def test_constant_classifier_balanced_two_classes():
    # all-zero weights predict class 1 everywhere (lowest-index tie-break)
    model = LinearModel.zeros(2, 2)
    angles = np.linspace(0.1, 1.2, 8)
    feats = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    report = evaluate(model, dataset(2, feats, [0, 0, 0, 0, 1, 1, 1, 1]))
    assert np.array_equal(report.confusion_hat, [[1.0, 1.0], [0.0, 0.0]])
    assert report.confusion_rate == pytest.approx(math.sqrt(2.0), abs=1e-12)
    assert report.error_rate == pytest.approx(0.5, abs=1e-12)
    assert np.array_equal(report.per_class_error, [0.0, 1.0])
    assert report.offdiag_rate == pytest.approx(1.0, abs=1e-12)
    assert report.absent_classes == ()


def test_perfect_classifier_counts_present_classes():
    model = LinearModel(3, 2, np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]).T)
    feats = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, 1.0]])
    report = evaluate(model, dataset(3, feats, [0, 1, 2, 1]))
    assert report.error_rate == 0.0
    assert report.confusion_rate == pytest.approx(math.sqrt(3.0), abs=1e-12)
    assert report.offdiag_rate == 0.0
    assert np.array_equal(report.confusion_hat, np.eye(3))

    # drop class 2 from the test set: zero column, flagged, rate sqrt(2)
    report2 = evaluate(model, dataset(3, feats[[0, 1, 3]], [0, 1, 1]))
    assert report2.absent_classes == (2,)
    assert np.array_equal(report2.confusion_hat[:, 2], [0.0, 0.0, 0.0])
    assert report2.confusion_rate == pytest.approx(math.sqrt(2.0), abs=1e-12)


def test_error_rate_is_prior_weighted_class_errors():
    gen = RngStream(314).generator()
    model = LinearModel(4, 3, gen.normal(size=(3, 4)))
    feats = gen.normal(size=(60, 3))
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    labels = gen.integers(0, 4, 60)
    report = evaluate(model, dataset(4, feats, labels))
    priors = np.bincount(labels, minlength=4) / 60.0
    assert report.error_rate == pytest.approx(
        float(priors @ report.per_class_error), abs=1e-9)
    # present columns sum to one
    for q in range(4):
        if q not in report.absent_classes:
            assert report.confusion_hat[:, q].sum() == pytest.approx(1.0, abs=1e-9)


def test_evaluate_invariant_under_test_permutation():
    gen = RngStream(2718).generator()
    model = LinearModel(3, 2, gen.normal(size=(2, 3)))
    feats = gen.normal(size=(40, 2))
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    labels = gen.integers(0, 3, 40)
    perm = gen.permutation(40)
    a = evaluate(model, dataset(3, feats, labels))
    b = evaluate(model, dataset(3, feats[perm], labels[perm]))
    assert np.array_equal(a.confusion_hat, b.confusion_hat)
    assert a.error_rate == b.error_rate


def test_confusion_rate_stable_across_resampled_test_sets(compiled_kernels):
    cfg = SynthConfig(q_classes=4, dim=2, n_train=100, n_test=10_000,
                      margin_theta=0.02, seed=5)
    stream = RngStream(5)
    concept = generate_concept(cfg, stream.child("concept"))
    gen = RngStream(6).generator()
    model = LinearModel(4, 2, gen.normal(size=(2, 4)))
    rates = []
    for k in range(10):
        test = generate_dataset(cfg, concept, stream.child("test", k))
        rates.append(evaluate(model, test).confusion_rate)
    assert float(np.std(rates)) < 0.1


def test_evaluate_rejections():
    model = LinearModel.zeros(2, 2)
    empty = LabeledDataset(2, np.zeros((0, 2)), np.zeros(0, dtype=np.int64),
                           np.zeros(0, dtype=np.int64))
    with pytest.raises(EmptyTestSetError):
        evaluate(model, empty)

    feats = np.array([[1.0, 0.0]])
    no_true = LabeledDataset(2, feats, np.array([MISSING], dtype=np.int64),
                             np.array([0]))
    with pytest.raises(MissingLabelsError):
        evaluate(model, no_true)

    with pytest.raises(DimensionMismatchError):
        evaluate(LinearModel.zeros(3, 2), dataset(2, feats, [0]))


# ---------------------------------------------------------------------------
# estimate_confusion_from_pairs


def test_estimate_identity_when_labels_agree():
    est = estimate_confusion_from_pairs(pairs_dataset(3, [0, 1, 2, 1], [0, 1, 2, 1]))
    assert isinstance(est, ConfusionMatrix)
    assert np.array_equal(est.mat, np.eye(3))


def test_estimate_four_pair_hand_count():
    # true (1,1,2,2), observed (1,2,2,2) in one-based terms
    est = estimate_confusion_from_pairs(pairs_dataset(2, [0, 0, 1, 1], [0, 1, 1, 1]))
    assert isinstance(est, ConfusionMatrix)
    assert np.array_equal(est.mat, [[0.5, 0.0], [0.5, 1.0]])


def test_estimate_absent_class_degrades_with_one_based_name():
    est = estimate_confusion_from_pairs(pairs_dataset(3, [0, 0, 2], [0, 0, 2]))
    assert isinstance(est, DegradedEstimate)
    assert est.absent_classes == (1,)
    assert any("class 2" in p for p in est.problems)
    assert np.array_equal(est.per_class_support, [2.0, 0.0, 1.0])


def test_estimate_singular_matrix_degrades():
    # every example observed as class 1 -> two identical columns
    est = estimate_confusion_from_pairs(pairs_dataset(2, [0, 0, 1, 1], [0, 0, 0, 0]))
    assert isinstance(est, DegradedEstimate)
    assert est.absent_classes == ()
    assert any("not invertible" in p for p in est.problems)


def test_estimate_requires_both_label_columns():
    feats = np.array([[1.0, 0.0]])
    only_true = LabeledDataset(2, feats, np.array([0]),
                               np.array([MISSING], dtype=np.int64))
    with pytest.raises(MissingLabelsError):
        estimate_confusion_from_pairs(only_true)


# ---------------------------------------------------------------------------
# distances


def synthetic_report(q, hat, error_rate):
    hat = np.asarray(hat, dtype=np.float64)
    return EvalReport(
        q_classes=q, confusion_hat=hat,
        confusion_rate=float(np.sqrt((hat * hat).sum())),
        offdiag_rate=0.0, error_rate=error_rate,
        per_class_error=1.0 - np.diag(hat))


def test_dist_error_absolute_difference():
    a = synthetic_report(2, np.eye(2), 0.3)
    b = synthetic_report(2, np.eye(2), 0.1)
    assert dist_error(a, b) == pytest.approx(0.2, abs=1e-12)
    assert dist_error(b, a) == dist_error(a, b)
    assert dist_error(a, a) == 0.0


def test_dist_confusion_perfect_two_vs_three_present():
    two = synthetic_report(3, np.diag([1.0, 1.0, 0.0]), 0.0)
    three = synthetic_report(3, np.eye(3), 0.0)
    assert dist_confusion(two, three) == pytest.approx(
        math.sqrt(3.0) - math.sqrt(2.0), abs=1e-12)
    assert dist_confusion(two, two) == 0.0
    assert dist_confusion(three, two) >= 0.0


def test_dist_classwise_three_four_five():
    a = synthetic_report(2, np.eye(2), 0.0)
    b = synthetic_report(2, np.diag([0.4, 0.2]), 0.5)
    # per-class errors (0,0) vs (0.6,0.8): distance 1
    assert dist_classwise(a, b) == pytest.approx(1.0, abs=1e-12)


def test_dist_couplewise_identity_vs_anti_identity():
    a = synthetic_report(2, np.eye(2), 0.0)
    b = synthetic_report(2, np.array([[0.0, 1.0], [1.0, 0.0]]), 1.0)
    assert dist_couplewise(a, b) == pytest.approx(2.0, abs=1e-12)


def test_classwise_bounded_by_couplewise_and_triangle():
    gen = RngStream(999).generator()

    def random_report():
        raw = gen.uniform(size=(3, 3))
        hat = raw / raw.sum(axis=0)
        return synthetic_report(3, hat, float(gen.uniform()))

    reports = [random_report() for _ in range(12)]
    for a in reports:
        for b in reports:
            assert dist_classwise(a, b) <= dist_couplewise(a, b) + 1e-12
    for a, b, c in zip(reports[:4], reports[4:8], reports[8:12]):
        assert dist_classwise(a, c) <= (
            dist_classwise(a, b) + dist_classwise(b, c) + 1e-12)


def test_distances_reject_mismatched_q():
    a = synthetic_report(2, np.eye(2), 0.0)
    b = synthetic_report(3, np.eye(3), 0.0)
    for dist in (dist_error, dist_confusion, dist_classwise, dist_couplewise):
        with pytest.raises(DimensionMismatchError):
            dist(a, b)


# ---------------------------------------------------------------------------
# serialization


def test_report_json_round_trip(tmp_path):
    model = LinearModel(3, 2, np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]).T)
    feats = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    report = evaluate(model, dataset(3, feats, [0, 1, 1]))
    assert report.absent_classes == (2,)

    path = tmp_path / "report.json"
    save_report_json(path, report)
    back = load_report_json(path)
    assert back.q_classes == report.q_classes
    assert np.array_equal(back.confusion_hat, report.confusion_hat)
    assert back.confusion_rate == report.confusion_rate
    assert back.offdiag_rate == report.offdiag_rate
    assert back.error_rate == report.error_rate
    assert np.array_equal(back.per_class_error, report.per_class_error)
    assert back.absent_classes == report.absent_classes

    # the absent-class list is one-based on disk
    assert report_as_dict(report)["absent_classes"] == [3]
    assert report_from_dict(report_as_dict(report)).absent_classes == (2,)
