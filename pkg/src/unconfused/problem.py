"""Problem domain types and file formats.

Class labels are 0-based everywhere in code; the file formats and error
messages use 1-based labels.  A label value of -1 inside an array means
"absent" (the CSV cell was empty).

Dataset CSV format (UTF-8, LF newlines):

    label,noisy_label,f1,...,fd

Leading lines starting with '#' are comments and are skipped on load.
Confusion matrices are stored as JSON ``{"q": Q, "rows": [[...], ...]}``
where ``rows[p][q]`` is the probability of observing label p+1 when the true
label is q+1 (columns sum to one).  Linear models are stored as JSON
``{"q": Q, "d": d, "columns": [[...], ...]}`` with one weight column per
class.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import matrixcore
from .errors import (
    DatasetFormatError,
    DimensionMismatchError,
    InvalidConfusionError,
    MissingLabelsError,
    SingularMatrixError,
)

UNIT_NORM_TOL = 1e-9
COLUMN_SUM_TOL = 1e-9
MISSING = -1


def _format_float(x) -> str:
    # repr gives the shortest string that round-trips to the same float64
    return repr(float(x))


@dataclass(frozen=True)
class LabeledDataset:
    """A fixed pool of unit-norm feature vectors with optional label pairs.

    ``true_labels`` and ``noisy_labels`` are int64 arrays with MISSING (-1)
    marking absent values; every example carries at least one of the two.
    Treat instances as immutable.
    """

    q_classes: int
    features: np.ndarray
    true_labels: np.ndarray
    noisy_labels: np.ndarray

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        tl = np.asarray(self.true_labels, dtype=np.int64)
        nl = np.asarray(self.noisy_labels, dtype=np.int64)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "true_labels", tl)
        object.__setattr__(self, "noisy_labels", nl)
        if self.q_classes < 1:
            raise DatasetFormatError("q_classes must be at least 1")
        if feats.ndim != 2:
            raise DimensionMismatchError(f"features must be 2-D, got shape {feats.shape}")
        n = feats.shape[0]
        if tl.shape != (n,) or nl.shape != (n,):
            raise DimensionMismatchError("label arrays must match the number of rows")
        if not np.isfinite(feats).all():
            raise DatasetFormatError("features must be finite")
        if n:
            norms = np.sqrt((feats ** 2).sum(axis=1))
            bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
            if bad.size:
                i = int(bad[0])
                raise DatasetFormatError(
                    f"feature row {i + 1} has norm {norms[i]:.12f}, expected 1 within {UNIT_NORM_TOL:.0e}"
                )
        for name, arr in (("true", tl), ("noisy", nl)):
            ok = (arr == MISSING) | ((arr >= 0) & (arr < self.q_classes))
            if not ok.all():
                i = int(np.flatnonzero(~ok)[0])
                raise DatasetFormatError(
                    f"{name} label {int(arr[i]) + 1} out of range 1..{self.q_classes} at row {i + 1}"
                )
        both_missing = (tl == MISSING) & (nl == MISSING)
        if both_missing.any():
            i = int(np.flatnonzero(both_missing)[0])
            raise MissingLabelsError(f"example {i + 1} has neither a true nor a noisy label")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def has_true(self) -> bool:
        return bool((self.true_labels != MISSING).all()) and self.n > 0

    def has_noisy(self) -> bool:
        return bool((self.noisy_labels != MISSING).all()) and self.n > 0


@dataclass(frozen=True)
class ConfusionReport:
    """Outcome of validating a would-be confusion matrix."""

    passed: bool
    column_sum_dev: float
    negative_entries: int
    above_one_entries: int
    condition: float
    problems: tuple[str, ...] = field(default_factory=tuple)


def validate_confusion(mat) -> ConfusionReport:
    """Check column-stochasticity, entry range and conditioning of a matrix.

    Accepts a raw array or a ConfusionMatrix.  Returns a report instead of
    raising, so callers can degrade gracefully on estimated matrices.
    """
    if isinstance(mat, ConfusionMatrix):
        m = mat.mat
    else:
        m = matrixcore.as_matrix(mat)
    problems = []
    if m.shape[0] != m.shape[1]:
        return ConfusionReport(False, math.inf, 0, 0, math.inf, (f"matrix is {m.shape[0]}x{m.shape[1]}, expected square",))
    col_sums = m.sum(axis=0)
    dev = float(np.max(np.abs(col_sums - 1.0)))
    if dev > COLUMN_SUM_TOL:
        q = int(np.argmax(np.abs(col_sums - 1.0)))
        problems.append(f"column {q + 1} sums to {col_sums[q]:.12f}, expected 1 within {COLUMN_SUM_TOL:.0e}")
    negative = int((m < 0).sum())
    if negative:
        problems.append(f"{negative} entries below 0")
    above = int((m > 1).sum())
    if above:
        problems.append(f"{above} entries above 1")
    condition = matrixcore.condition_estimate(m)
    if not math.isfinite(condition):
        problems.append("matrix is numerically singular")
    return ConfusionReport(not problems, dev, negative, above, condition, tuple(problems))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Column-stochastic label corruption model; entry [p, q] is P(observed p | true q).

    Construction validates entries, column sums, and invertibility.
    """

    q_classes: int
    mat: np.ndarray

    def __post_init__(self):
        m = matrixcore.as_matrix(self.mat)
        object.__setattr__(self, "mat", m)
        if m.shape != (self.q_classes, self.q_classes):
            raise DimensionMismatchError(
                f"expected a {self.q_classes}x{self.q_classes} matrix, got {m.shape[0]}x{m.shape[1]}"
            )
        report = validate_confusion(m)
        if not report.passed:
            if not math.isfinite(report.condition) and report.column_sum_dev <= COLUMN_SUM_TOL \
                    and not report.negative_entries and not report.above_one_entries:
                raise SingularMatrixError("confusion matrix is not invertible")
            raise InvalidConfusionError("; ".join(report.problems))

    @staticmethod
    def identity(q_classes: int) -> "ConfusionMatrix":
        return ConfusionMatrix(q_classes, np.eye(q_classes))


@dataclass(frozen=True)
class LinearModel:
    """One weight column per class; prediction is the arg-max score."""

    q_classes: int
    dim: int
    weights: np.ndarray  # shape (dim, q_classes)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.shape != (self.dim, self.q_classes):
            raise DimensionMismatchError(
                f"expected weights of shape ({self.dim}, {self.q_classes}), got {w.shape}"
            )
        if not np.isfinite(w).all():
            raise ValueError("model weights must be finite")

    @staticmethod
    def zeros(q_classes: int, dim: int) -> "LinearModel":
        return LinearModel(q_classes, dim, np.zeros((dim, q_classes)))


def predict(model: LinearModel, x) -> int:
    """Arg-max class of a single point; ties resolve to the smallest class index."""
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (model.dim,):
        raise DimensionMismatchError(f"expected a vector of length {model.dim}, got shape {v.shape}")
    return int(np.argmax(v @ model.weights))


def predict_batch(model: LinearModel, features) -> np.ndarray:
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != model.dim:
        raise DimensionMismatchError(f"expected an (n, {model.dim}) array, got shape {feats.shape}")
    return np.argmax(feats @ model.weights, axis=1).astype(np.int64)


def margin_of(model: LinearModel, x, label: int) -> float:
    """Smallest score gap between ``label`` and any rival class; negative when misclassified."""
    v = np.asarray(x, dtype=np.float64)
    if not 0 <= label < model.q_classes:
        raise ValueError(f"label {label + 1} out of range 1..{model.q_classes}")
    scores = v @ model.weights
    if model.q_classes == 1:
        return math.inf
    rivals = np.delete(scores, label)
    return float(scores[label] - rivals.max())


# ---------------------------------------------------------------------------
# file formats


def save_dataset_csv(path, ds: LabeledDataset, comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "noisy_label"] + [f"f{j + 1}" for j in range(ds.dim)])
        for i in range(ds.n):
            t = ds.true_labels[i]
            y = ds.noisy_labels[i]
            row = ["" if t == MISSING else str(int(t) + 1), "" if y == MISSING else str(int(y) + 1)]
            row.extend(_format_float(v) for v in ds.features[i])
            writer.writerow(row)


def _parse_label(cell: str, q_classes: int, path, line_no: int, col: str) -> int:
    cell = cell.strip()
    if cell == "":
        return MISSING
    try:
        value = int(cell)
    except ValueError:
        raise DatasetFormatError.at(path, line_no, f"{col} {cell!r} is not an integer") from None
    if not 1 <= value <= q_classes:
        raise DatasetFormatError.at(path, line_no, f"{col} {value} out of range 1..{q_classes}")
    return value - 1


def load_dataset_csv(path, q_classes: int, renormalize: bool = False) -> LabeledDataset:
    """Read a dataset CSV.  Rows whose features are not unit-norm raise unless
    ``renormalize`` is set, in which case they are scaled explicitly."""
    feats: list[list[float]] = []
    true_l: list[int] = []
    noisy_l: list[int] = []
    dim = None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        line_no = 0
        header = None
        for raw in fh:
            line_no += 1
            if raw.startswith("#"):
                continue
            row = next(csv.reader([raw]))
            if header is None:
                header = row
                if len(header) < 3 or header[0] != "label" or header[1] != "noisy_label":
                    raise DatasetFormatError.at(path, line_no, "header must be label,noisy_label,f1,...")
                dim = len(header) - 2
                continue
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != dim + 2:
                raise DatasetFormatError.at(path, line_no, f"expected {dim + 2} cells, found {len(row)}")
            true_l.append(_parse_label(row[0], q_classes, path, line_no, "label"))
            noisy_l.append(_parse_label(row[1], q_classes, path, line_no, "noisy_label"))
            try:
                vec = [float(c) for c in row[2:]]
            except ValueError:
                raise DatasetFormatError.at(path, line_no, "feature cells must be numeric") from None
            if not all(math.isfinite(v) for v in vec):
                raise DatasetFormatError.at(path, line_no, "feature cells must be finite")
            if renormalize:
                norm = math.sqrt(sum(v * v for v in vec))
                if norm == 0.0:
                    raise DatasetFormatError.at(path, line_no, "cannot renormalize a zero feature vector")
                vec = [v / norm for v in vec]
            else:
                norm = math.sqrt(sum(v * v for v in vec))
                if abs(norm - 1.0) > UNIT_NORM_TOL:
                    raise DatasetFormatError.at(
                        path, line_no,
                        f"feature norm {norm:.12f} is not 1 within {UNIT_NORM_TOL:.0e} (pass renormalize to rescale)",
                    )
            feats.append(vec)
        if header is None:
            raise DatasetFormatError.at(path, line_no, "file has no header row")
    n = len(feats)
    return LabeledDataset(
        q_classes,
        np.array(feats, dtype=np.float64).reshape(n, dim if dim else 0),
        np.array(true_l, dtype=np.int64),
        np.array(noisy_l, dtype=np.int64),
    )


def save_matrix_json(path, mat, kind: str | None = None) -> None:
    m = matrixcore.as_matrix(mat)
    payload = {"q": int(m.shape[0]), "rows": [[float(v) for v in row] for row in m]}
    if kind is not None:
        payload["kind"] = kind
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_matrix_json(path) -> tuple[np.ndarray, str | None]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        q = int(payload["q"])
        rows = payload["rows"]
    except (KeyError, TypeError, ValueError):
        raise DatasetFormatError.at(path, 1, "matrix JSON needs integer 'q' and a 'rows' list") from None
    m = matrixcore.as_matrix(rows)
    if m.shape != (q, q):
        raise DatasetFormatError.at(path, 1, f"'rows' is {m.shape[0]}x{m.shape[1]}, expected {q}x{q}")
    return m, payload.get("kind")


def save_confusion_json(path, c: ConfusionMatrix, kind: str | None = "stochastic") -> None:
    save_matrix_json(path, c.mat, kind=kind)


def load_confusion_json(path) -> ConfusionMatrix:
    m, _ = load_matrix_json(path)
    return ConfusionMatrix(m.shape[0], m)


def save_model_json(path, model: LinearModel) -> None:
    payload = {
        "q": model.q_classes,
        "d": model.dim,
        "columns": [[float(v) for v in model.weights[:, q]] for q in range(model.q_classes)],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_model_json(path) -> LinearModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        q = int(payload["q"])
        d = int(payload["d"])
        cols = payload["columns"]
    except (KeyError, TypeError, ValueError):
        raise DatasetFormatError.at(path, 1, "model JSON needs 'q', 'd' and 'columns'") from None
    if len(cols) != q or any(len(col) != d for col in cols):
        raise DatasetFormatError.at(path, 1, f"'columns' must hold {q} columns of length {d}")
    w = np.array(cols, dtype=np.float64).T
    return LinearModel(q, d, w)
