"""Reference learners: the plain multiclass perceptron.

Trained either on noisy labels (the baseline the noise-corrected trainer is
measured against) or on true labels (the skyline).  Updates are the classic
pair: add the example to the labeled class column, subtract it from the
mispredicting one, which keeps the columns summing to zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, MissingLabelsError
from .problem import MISSING, LabeledDataset, LinearModel, predict_batch
from .rng import RngStream

LABEL_SOURCES = ("true", "noisy")


@dataclass(frozen=True)
class PerceptronConfig:
    """max_epochs passes over the data (>= 1), optionally shuffled per epoch
    with a deterministic seeded order; label_source picks which label column
    supervises training."""

    max_epochs: int = 50
    shuffle: bool = True
    seed: int = 0
    label_source: str = "noisy"

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.label_source not in LABEL_SOURCES:
            raise ConfigError(f"label_source must be one of {LABEL_SOURCES}, "
                              f"got {self.label_source!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")


@dataclass
class PerceptronSummary:
    """Telemetry from one training run, filled in place when passed to
    train_perceptron."""

    backend: str = ""
    updates: int = 0
    epochs_run: int = 0
    converged: bool = False
    max_colsum_ratio: float = 0.0

    def as_dict(self) -> dict:
        return {"backend": self.backend, "updates": self.updates,
                "epochs_run": self.epochs_run, "converged": self.converged,
                "max_colsum_ratio": self.max_colsum_ratio}


def _training_labels(dataset: LabeledDataset, source: str) -> np.ndarray:
    labels = dataset.true_labels if source == "true" else dataset.noisy_labels
    if np.any(labels == MISSING):
        raise MissingLabelsError(
            f"label source {source!r} is missing on "
            f"{int((labels == MISSING).sum())} of {dataset.n} examples")
    return labels


def train_perceptron(dataset: LabeledDataset, config: PerceptronConfig,
                     summary: PerceptronSummary | None = None) -> LinearModel:
    """Multiclass perceptron from the zero model.

    Visits examples in a per-epoch order (shuffled when configured, else
    sequential), applies the +x/-x column update on each mistake, and stops
    after a full mistake-free pass or max_epochs, whichever comes first.
    """
    labels = _training_labels(dataset, config.label_source)
    orders = np.empty((config.max_epochs, dataset.n), dtype=np.int64)
    if config.shuffle:
        gen = RngStream(config.seed).child("epoch-order").generator()
        for e in range(config.max_epochs):
            orders[e] = gen.permutation(dataset.n)
    else:
        orders[:] = np.arange(dataset.n, dtype=np.int64)
    WT = np.zeros((dataset.q_classes, dataset.dim))
    diag = np.zeros(2)
    if _kernels.USE_NUMBA:
        updates, epochs_run = _kernels.perceptron_epochs_numba(
            dataset.features, labels, WT, orders, diag)
    else:
        updates, epochs_run = _kernels.perceptron_epochs_numpy(
            dataset.features, labels, WT, orders, diag)
    model = LinearModel(q_classes=dataset.q_classes, dim=dataset.dim,
                        weights=WT.T.copy())
    if summary is not None:
        summary.backend = _kernels.backend()
        summary.updates = int(updates)
        summary.epochs_run = int(epochs_run)
        preds = predict_batch(model, dataset.features)
        summary.converged = bool((preds == labels).all())
        summary.max_colsum_ratio = float(diag[0])
    return model
