"""Noise-corrected ultraconservative trainer.

Learns one linear score column per class from noisy labels, given the
column-stochastic confusion matrix that produced them.  Each iteration
rebuilds, from scratch against the current model, one reconstructed update
vector per ordered class pair (inverting the confusion matrix turns
per-noisy-class feature sums over a confidence region into estimates of
per-true-class sums), picks a pair by the configured strategy, and applies
an ultraconservative step: coefficients sum to zero, only classes currently
beating the source class move.

The module-level functions mirror the trainer's inner steps on plain
arrays so each piece can be inspected and tested in isolation; ``train``
runs the fused loop from :mod:`unconfused._kernels` instead of composing
them, which is what makes sweeps affordable.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, MissingLabelsError, NoViableCandidateError
from .matrixcore import invert
from .problem import MISSING, ConfusionMatrix, LabeledDataset, LinearModel, _format_float
from .rng import RngStream

PI_FLOOR = 1e-6
TAU_BALANCE_TOL = 1e-12

SELECTION_MODES = {"error": _kernels.SEL_ERROR,
                   "confusion": _kernels.SEL_CONFUSION,
                   "random": _kernels.SEL_RANDOM}
STEP_RULES = {"perceptron": _kernels.STEP_PERCEPTRON,
              "uniform": _kernels.STEP_UNIFORM}
STOP_REASONS = {_kernels.STOP_CONVERGED: "converged",
                _kernels.STOP_NO_VIABLE: "no_viable_candidate",
                _kernels.STOP_MAX_ITERS: "max_iters"}


@dataclass(frozen=True)
class UmaConfig:
    """Knobs for the noise-corrected trainer.

    alpha        confidence threshold for region membership and error sets
    stop_norm    candidate vectors at or below this norm are ignored; when
                 none exceeds it the run stops
    max_iters    hard cap on applied updates
    selection    'error' (largest norm), 'confusion' (norm divided by the
                 estimated prior of the source class), or 'random'
    step_rule    'perceptron' (all weight on the predicted class when it is
                 in the error set) or 'uniform' (spread over the error set)
    """

    alpha: float = 1e-3
    stop_norm: float = 1e-4
    max_iters: int = 100_000
    selection: str = "error"
    step_rule: str = "perceptron"

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0.0:
            raise ConfigError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not np.isfinite(self.stop_norm) or self.stop_norm <= 0.0:
            raise ConfigError(f"stop_norm must be finite and > 0, got {self.stop_norm}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.selection not in SELECTION_MODES:
            raise ConfigError(f"unknown selection strategy {self.selection!r}")
        if self.step_rule not in STEP_RULES:
            raise ConfigError(f"unknown step rule {self.step_rule!r}")


@dataclass(frozen=True)
class UpdateCandidate:
    """One reconstructed update vector for the ordered pair (winner, source).

    winner is the class whose confidence region supplied the points, source
    the class whose row of the inverse confusion matrix reconstructed the
    vector.  support counts the points in the region.
    """

    winner: int
    source: int
    z: np.ndarray
    support: int
    norm_z: float


@dataclass(frozen=True)
class IterationTrace:
    """One applied update: the chosen pair, its vector norm, the error-set
    size, and the training error on noisy labels measured after the update
    (the trainer's next data pass fills it; the last row gets a final pass)."""

    iteration: int
    winner: int
    source: int
    norm_z: float
    error_set_size: int
    train_noisy_error: float


@dataclass
class UmaDiagnostics:
    """Invariant telemetry accumulated inside the training loop."""

    backend: str = ""
    updates: int = 0
    stop_reason: str = ""
    max_colsum_ratio: float = 0.0
    max_tau_sum: float = 0.0

    def as_dict(self) -> dict:
        return {"backend": self.backend, "updates": self.updates,
                "stop_reason": self.stop_reason,
                "max_colsum_ratio": self.max_colsum_ratio,
                "max_tau_sum": self.max_tau_sum}


@dataclass(frozen=True)
class ClassPriorEstimate:
    """Estimated true-class priors: raw inverse-corrected frequencies (may
    dip below zero on noisy counts) and their nonnegative clamp."""

    raw: np.ndarray
    clamped: np.ndarray


def region_mask(model: LinearModel, features: np.ndarray, winner: int,
                alpha: float) -> np.ndarray:
    """Boolean mask of rows scored strictly more than alpha higher for
    ``winner`` than for every other class."""
    scores = features @ model.weights
    rivals = np.delete(scores, winner, axis=1)
    return scores[:, winner] - rivals.max(axis=1) > alpha


def region_indices(model: LinearModel, dataset: LabeledDataset, winner: int,
                   alpha: float) -> np.ndarray:
    """Indices of dataset rows inside ``winner``'s confidence region: rows
    scored strictly more than alpha above every rival class.  An all-zero
    model has empty regions for any alpha >= 0 (a zero gap is never > 0)."""
    if dataset.dim != model.dim:
        raise ConfigError(
            f"dataset dim {dataset.dim} does not match model dim {model.dim}")
    return np.flatnonzero(region_mask(model, dataset.features, winner, alpha))


def noisy_class_sums(dataset: LabeledDataset, model: LinearModel, winner: int,
                     alpha: float) -> np.ndarray:
    """(Q, d) matrix whose row k averages the feature vectors that fall in
    ``winner``'s confidence region and carry noisy label k.  The divisor is
    the full dataset size, not the region size."""
    if not dataset.has_noisy():
        raise MissingLabelsError("noisy labels are required to form class sums")
    mask = region_mask(model, dataset.features, winner, alpha)
    q = dataset.q_classes
    out = np.zeros((q, dataset.dim))
    idx = mask & (dataset.noisy_labels != MISSING)
    labels = dataset.noisy_labels[idx]
    kept = dataset.features[idx]
    for j in range(dataset.dim):
        out[:, j] = np.bincount(labels, weights=kept[:, j], minlength=q)
    return out / dataset.n


def update_candidate(dataset: LabeledDataset, model: LinearModel,
                     confusion: ConfusionMatrix, winner: int, source: int,
                     alpha: float) -> UpdateCandidate:
    """Reconstructed update vector for the ordered pair (winner, source):
    the source-class row of the inverse confusion matrix applied to the
    per-noisy-class sums over the winner's region."""
    if winner == source:
        raise ConfigError("winner and source must be distinct classes")
    cinv = invert(confusion.mat)
    sums = noisy_class_sums(dataset, model, winner, alpha)
    z = cinv[source] @ sums
    support = int(region_mask(model, dataset.features, winner, alpha).sum())
    return UpdateCandidate(winner=winner, source=source, z=z, support=support,
                           norm_z=float(np.linalg.norm(z)))


def all_candidates(dataset: LabeledDataset, model: LinearModel,
                   confusion: ConfusionMatrix, alpha: float) -> list[UpdateCandidate]:
    """Every ordered-pair candidate (winner != source), winner-major order."""
    cinv = invert(confusion.mat)
    out = []
    for p in range(dataset.q_classes):
        sums = noisy_class_sums(dataset, model, p, alpha)
        support = int(region_mask(model, dataset.features, p, alpha).sum())
        for q in range(dataset.q_classes):
            if q == p:
                continue
            z = cinv[q] @ sums
            out.append(UpdateCandidate(winner=p, source=q, z=z, support=support,
                                       norm_z=float(np.linalg.norm(z))))
    return out


def error_set(model: LinearModel, z: np.ndarray, source: int,
              alpha: float) -> list[int]:
    """Classes other than ``source`` whose score on z beats the source class
    by at least alpha (non-strict)."""
    gaps = (model.weights.T - model.weights[:, source]) @ z
    hits = [r for r in range(model.q_classes) if r != source and gaps[r] >= alpha]
    return hits


def step_coefficients(error_hits: list[int], source: int,
                      step_rule: str = "perceptron",
                      winner: int | None = None) -> dict[int, float]:
    """Per-class step coefficients for one update, as a sparse map (absent
    classes step by zero).  +1 on the source class; the 'perceptron' rule
    puts the balancing -1 on the winner when it is in the error set and
    otherwise falls back to a uniform -1/|E| spread; 'uniform' always
    spreads.  An empty error set yields the all-zero map: no update, the
    caller marks the candidate spent."""
    if step_rule not in STEP_RULES:
        raise ConfigError(f"unknown step rule {step_rule!r}")
    hits = sorted(set(error_hits))
    if source in hits:
        raise ConfigError("the source class cannot sit in its own error set")
    if not hits:
        return {}
    tau = {source: 1.0}
    if step_rule == "perceptron" and winner is not None and winner in hits:
        tau[winner] = -1.0
    else:
        share = -1.0 / len(hits)
        for r in hits:
            tau[r] = share
    return tau


def apply_update(model: LinearModel, z: np.ndarray,
                 tau: dict[int, float]) -> LinearModel:
    """New model with column r shifted by tau[r] * z.  The coefficients must
    balance: their sum stays within 1e-12 of zero."""
    total = sum(tau.values())
    if abs(total) > TAU_BALANCE_TOL:
        raise ConfigError(f"step coefficients sum to {total!r}, expected 0")
    weights = model.weights.copy()
    for r, coeff in tau.items():
        weights[:, r] += coeff * z
    return LinearModel(q_classes=model.q_classes, dim=model.dim, weights=weights)


def estimate_class_priors(dataset: LabeledDataset,
                          confusion: ConfusionMatrix) -> ClassPriorEstimate:
    """True-class priors recovered from noisy label frequencies by the
    inverse confusion matrix.  Raw values can be slightly negative on finite
    samples; the clamped copy floors them at zero."""
    if not dataset.has_noisy():
        raise MissingLabelsError("prior estimation requires noisy labels")
    counts = np.bincount(dataset.noisy_labels[dataset.noisy_labels != MISSING],
                         minlength=dataset.q_classes).astype(float)
    raw = invert(confusion.mat) @ (counts / counts.sum())
    return ClassPriorEstimate(raw=raw, clamped=np.maximum(raw, 0.0))


def select_pair(candidates: list[UpdateCandidate], strategy: str,
                stop_norm: float, priors: np.ndarray | None = None,
                rng: RngStream | None = None) -> UpdateCandidate:
    """Pick one viable candidate (norm above stop_norm) by strategy.

    'error' takes the largest norm, 'confusion' the largest norm divided by
    the (floored) estimated prior of the source class, 'random' a uniform
    draw.  Deterministic ties break toward the smallest (winner, source).
    """
    if strategy not in SELECTION_MODES:
        raise ConfigError(f"unknown selection strategy {strategy!r}")
    viable = [c for c in candidates if c.norm_z > stop_norm]
    if not viable:
        raise NoViableCandidateError(
            f"no candidate norm exceeds stop_norm={stop_norm!r}")
    viable.sort(key=lambda c: (c.winner, c.source))
    if strategy == "random":
        if rng is None:
            raise ConfigError("random selection needs an rng stream")
        return viable[int(rng.generator().integers(len(viable)))]
    if strategy == "confusion":
        if priors is None:
            raise ConfigError("confusion-weighted selection needs priors")
        floored = np.maximum(priors, PI_FLOOR)
        return max(viable, key=lambda c: c.norm_z / floored[c.source])
    return max(viable, key=lambda c: c.norm_z)


def train(dataset: LabeledDataset, confusion: ConfusionMatrix,
          config: UmaConfig, rng: RngStream,
          diagnostics: UmaDiagnostics | None = None
          ) -> tuple[LinearModel, list[IterationTrace]]:
    """Run the full training loop; returns the final model and one trace row
    per applied update.

    Starts from the all-zero model.  Strict score comparisons leave every
    region empty there, so the very first pass treats each point as belonging
    to every class's region and admits every rival into the error set; strict
    rules take over once any weight is nonzero.
    """
    if not dataset.has_noisy():
        raise MissingLabelsError("training requires noisy labels")
    if np.any(dataset.noisy_labels == MISSING):
        raise MissingLabelsError("training requires a noisy label on every row")
    if dataset.q_classes != confusion.q_classes:
        raise ConfigError(
            f"dataset has {dataset.q_classes} classes, confusion matrix "
            f"{confusion.q_classes}")
    cinv = invert(confusion.mat)
    if config.selection == "confusion":
        priors = estimate_class_priors(dataset, confusion).clamped
        sel_priors = np.maximum(priors, PI_FLOOR)
    else:
        sel_priors = np.ones(dataset.q_classes)
    cap = config.max_iters
    tp = np.zeros(cap, dtype=np.int64)
    tq = np.zeros(cap, dtype=np.int64)
    tnorm = np.zeros(cap)
    tesize = np.zeros(cap, dtype=np.int64)
    terr = np.zeros(cap)
    diag = np.zeros(4)
    WT = np.ascontiguousarray(np.zeros((dataset.q_classes, dataset.dim)))
    X = dataset.features
    y = dataset.noisy_labels
    sel_mode = SELECTION_MODES[config.selection]
    step_mode = STEP_RULES[config.step_rule]
    if _kernels.USE_NUMBA:
        rows = _kernels.uma_train_numba(
            X, y, WT, cinv, config.alpha, config.stop_norm, config.max_iters,
            sel_mode, step_mode, sel_priors, rng.child("kernel").kernel_seed(),
            tp, tq, tnorm, tesize, terr, diag)
    else:
        rows = _kernels.uma_train_numpy(
            X, y, WT, cinv, config.alpha, config.stop_norm, config.max_iters,
            sel_mode, step_mode, sel_priors, rng.child("kernel").generator(),
            tp, tq, tnorm, tesize, terr, diag)
    traces = [IterationTrace(iteration=t, winner=int(tp[t]), source=int(tq[t]),
                             norm_z=float(tnorm[t]),
                             error_set_size=int(tesize[t]),
                             train_noisy_error=float(terr[t]))
              for t in range(rows)]
    if diagnostics is not None:
        diagnostics.backend = _kernels.backend()
        diagnostics.updates = int(diag[2])
        diagnostics.stop_reason = STOP_REASONS[int(diag[3])]
        diagnostics.max_colsum_ratio = float(diag[0])
        diagnostics.max_tau_sum = float(diag[1])
    model = LinearModel(q_classes=dataset.q_classes, dim=dataset.dim,
                        weights=WT.T.copy())
    return model, traces


def save_trace_csv(path, traces: list[IterationTrace]) -> None:
    """Write trace rows with 1-based class ids, LF line endings.  The header
    is a stable file-format contract, not a naming choice."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "p", "q", "norm_z", "error_set_size",
                         "train_noisy_error"])
        for row in traces:
            writer.writerow([row.iteration, row.winner + 1, row.source + 1,
                             _format_float(row.norm_z), row.error_set_size,
                             _format_float(row.train_noisy_error)])
