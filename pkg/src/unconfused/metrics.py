"""Evaluation: empirical confusion matrices, rates, and model distances.

The headline figure, ``confusion_rate``, is the Frobenius norm of the
empirical prediction-confusion matrix, diagonal included.  Column q of that
matrix is the distribution of predictions over true-class-q test points, so
the rate rewards concentration, not correctness: a perfect classifier and a
constant one both score sqrt(Q), while uniformly scattered predictions score
1.  ``offdiag_rate`` (the same norm restricted to off-diagonal entries, so 0
is perfect) is reported alongside for a direction-unambiguous view.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyTestSetError,
    MissingLabelsError,
    SingularMatrixError,
)
from .matrixcore import frobenius_norm
from .problem import MISSING, ConfusionMatrix, LabeledDataset, LinearModel, predict_batch


@dataclass(frozen=True)
class EvalReport:
    """Test-set evaluation of one model.

    confusion_hat[p, q] is the fraction of true-class-q points predicted as
    class p; columns of classes absent from the test set are all zero and the
    classes are listed (0-based) in absent_classes.  per_class_error[q] is
    1 minus the diagonal entry.
    """

    q_classes: int
    confusion_hat: np.ndarray
    confusion_rate: float
    offdiag_rate: float
    error_rate: float
    per_class_error: np.ndarray
    absent_classes: tuple[int, ...] = ()


def evaluate(model: LinearModel, test: LabeledDataset) -> EvalReport:
    """Evaluate a model against the true labels of a test set."""
    if test.n == 0:
        raise EmptyTestSetError("cannot evaluate on an empty test set")
    if not test.has_true():
        raise MissingLabelsError("evaluation requires a true label on every row")
    if test.dim != model.dim or test.q_classes != model.q_classes:
        raise DimensionMismatchError(
            f"test set is {test.q_classes} classes x {test.dim} dims, model "
            f"{model.q_classes} x {model.dim}")
    q = model.q_classes
    preds = predict_batch(model, test.features)
    counts = np.zeros((q, q))
    np.add.at(counts, (preds, test.true_labels), 1.0)
    per_true = counts.sum(axis=0)
    absent = tuple(int(c) for c in np.flatnonzero(per_true == 0))
    hat = np.divide(counts, per_true, out=np.zeros_like(counts),
                    where=per_true > 0)
    offdiag = hat - np.diag(np.diag(hat))
    return EvalReport(
        q_classes=q,
        confusion_hat=hat,
        confusion_rate=frobenius_norm(hat),
        offdiag_rate=frobenius_norm(offdiag),
        error_rate=float((preds != test.true_labels).mean()),
        per_class_error=1.0 - np.diag(hat),
        absent_classes=absent,
    )


@dataclass(frozen=True)
class DegradedEstimate:
    """Diagnostic returned when label pairs cannot support an invertible
    confusion estimate; carries the raw column-normalized counts."""

    q_classes: int
    mat: np.ndarray
    per_class_support: np.ndarray
    absent_classes: tuple[int, ...]
    problems: tuple[str, ...] = field(default_factory=tuple)


def estimate_confusion_from_pairs(ds: LabeledDataset) -> ConfusionMatrix | DegradedEstimate:
    """Empirical confusion matrix from (true, noisy) label pairs.

    Entry [p, q] is the fraction of true-class-q examples observed as class
    p.  Returns a DegradedEstimate instead of raising when some class has no
    true-label support or the estimate is not invertible.
    """
    if not (ds.has_true() and ds.has_noisy()):
        raise MissingLabelsError(
            "confusion estimation requires both labels on every row")
    q = ds.q_classes
    counts = np.zeros((q, q))
    np.add.at(counts, (ds.noisy_labels, ds.true_labels), 1.0)
    support = counts.sum(axis=0)
    absent = tuple(int(c) for c in np.flatnonzero(support == 0))
    mat = np.divide(counts, support, out=np.zeros_like(counts),
                    where=support > 0)
    if absent:
        named = ", ".join(str(c + 1) for c in absent)
        return DegradedEstimate(
            q_classes=q, mat=mat, per_class_support=support,
            absent_classes=absent,
            problems=(f"no true-label support for class {named}",))
    try:
        return ConfusionMatrix(q, mat)
    except SingularMatrixError:
        return DegradedEstimate(
            q_classes=q, mat=mat, per_class_support=support, absent_classes=(),
            problems=("estimated matrix is not invertible",))


def _check_same_q(a: EvalReport, b: EvalReport) -> None:
    if a.q_classes != b.q_classes:
        raise DimensionMismatchError(
            f"reports cover {a.q_classes} and {b.q_classes} classes")


def dist_error(a: EvalReport, b: EvalReport) -> float:
    """Absolute difference of error rates."""
    _check_same_q(a, b)
    return abs(a.error_rate - b.error_rate)


def dist_confusion(a: EvalReport, b: EvalReport) -> float:
    """Absolute difference of (Frobenius) confusion rates."""
    _check_same_q(a, b)
    return abs(a.confusion_rate - b.confusion_rate)


def dist_classwise(a: EvalReport, b: EvalReport) -> float:
    """Euclidean distance between per-class error vectors."""
    _check_same_q(a, b)
    return float(np.linalg.norm(a.per_class_error - b.per_class_error))


def dist_couplewise(a: EvalReport, b: EvalReport) -> float:
    """Frobenius distance between empirical confusion matrices."""
    _check_same_q(a, b)
    return frobenius_norm(a.confusion_hat - b.confusion_hat)


def report_as_dict(report: EvalReport) -> dict:
    return {
        "q": report.q_classes,
        "confusion_hat": [[float(v) for v in row] for row in report.confusion_hat],
        "confusion_rate": report.confusion_rate,
        "offdiag_rate": report.offdiag_rate,
        "error_rate": report.error_rate,
        "per_class_error": [float(v) for v in report.per_class_error],
        "absent_classes": [c + 1 for c in report.absent_classes],
    }


def report_from_dict(payload: dict) -> EvalReport:
    hat = np.array(payload["confusion_hat"], dtype=np.float64)
    return EvalReport(
        q_classes=int(payload["q"]),
        confusion_hat=hat,
        confusion_rate=float(payload["confusion_rate"]),
        offdiag_rate=float(payload["offdiag_rate"]),
        error_rate=float(payload["error_rate"]),
        per_class_error=np.array(payload["per_class_error"], dtype=np.float64),
        absent_classes=tuple(int(c) - 1 for c in payload["absent_classes"]),
    )


def save_report_json(path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report_as_dict(report), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_report_json(path) -> EvalReport:
    with open(path, "r", encoding="utf-8") as fh:
        return report_from_dict(json.load(fh))
