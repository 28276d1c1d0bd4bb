"""Synthetic data generation.

Points are drawn uniformly on the unit sphere (for dim 2: a uniform angle),
labeled by a randomly drawn linear concept, and kept only when their score
margin under that concept exceeds the configured threshold, so every
generated dataset is linearly separable with a known margin.  Label noise is
injected afterwards by sampling each observed label from the confusion
matrix column of the true label.

Every function takes an RngStream and draws batches in a fixed order, so
identical (config, seed, stream) triples produce bit-identical datasets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matrixcore
from .errors import GenerationStalledError, InvalidConfusionError, SingularMatrixError
from .problem import ConfusionMatrix, LabeledDataset, LinearModel, MISSING
from .rng import RngStream

__all__ = [
    "SynthConfig",
    "RngStream",
    "generate_concept",
    "generate_dataset",
    "corrupt",
    "generate_sweep_matrices",
    "sweep_level_matrix",
]

STALL_WINDOW = 1_000_000  # draws per acceptance-rate check
STALL_RATE = 1e-4
SWEEP_CONDITION_LIMIT = 1e6
SWEEP_MAX_ATTEMPTS = 1000
_BATCH = 8192


@dataclass(frozen=True)
class SynthConfig:
    q_classes: int = 10
    dim: int = 2
    n_train: int = 1000
    n_test: int = 10_000
    margin_theta: float = 0.025
    seed: int = 0

    def __post_init__(self):
        if self.q_classes < 2:
            raise ValueError("q_classes must be at least 2")
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("dataset sizes must be positive")
        if not 0.0 <= self.margin_theta < 1.0:
            raise ValueError("margin_theta must lie in [0, 1)")


def _sphere_points(gen: np.random.Generator, count: int, dim: int) -> np.ndarray:
    if dim == 2:
        angles = gen.uniform(0.0, 2.0 * np.pi, size=count)
        return np.column_stack((np.cos(angles), np.sin(angles)))
    pts = gen.standard_normal((count, dim))
    norms = np.sqrt((pts ** 2).sum(axis=1))
    # a zero draw has probability zero; regenerate defensively if it happens
    while (norms == 0.0).any():
        bad = norms == 0.0
        pts[bad] = gen.standard_normal((int(bad.sum()), dim))
        norms = np.sqrt((pts ** 2).sum(axis=1))
    return pts / norms[:, None]


def generate_concept(cfg: SynthConfig, rng: RngStream) -> LinearModel:
    """Draw one unit-norm weight column per class, uniformly on the sphere."""
    gen = rng.generator()
    cols = _sphere_points(gen, cfg.q_classes, cfg.dim)
    norms = np.sqrt((cols ** 2).sum(axis=1))
    assert np.all(np.abs(norms - 1.0) <= 1e-12)
    return LinearModel(cfg.q_classes, cfg.dim, cols.T.copy())


def generate_dataset(cfg: SynthConfig, concept: LinearModel, rng: RngStream, n: int | None = None) -> LabeledDataset:
    """Rejection-sample ``n`` points whose concept margin strictly exceeds the
    configured threshold.  Raises GenerationStalledError when fewer than
    STALL_RATE of a full STALL_WINDOW of draws were accepted."""
    if n is None:
        n = cfg.n_train
    if n < 1:
        raise ValueError("n must be positive")
    gen = rng.generator()
    kept_feats = []
    kept_labels = []
    kept = 0
    window_draws = 0
    window_accepts = 0
    while kept < n:
        pts = _sphere_points(gen, _BATCH, cfg.dim)
        scores = pts @ concept.weights
        pred = np.argmax(scores, axis=1)
        best = scores[np.arange(_BATCH), pred]
        scores[np.arange(_BATCH), pred] = -np.inf
        second = scores.max(axis=1)
        accept = (best - second) > cfg.margin_theta
        n_acc = int(accept.sum())
        kept_feats.append(pts[accept])
        kept_labels.append(pred[accept])
        kept += n_acc
        window_draws += _BATCH
        window_accepts += n_acc
        if window_draws >= STALL_WINDOW:
            if window_accepts / window_draws < STALL_RATE:
                raise GenerationStalledError(
                    f"acceptance rate {window_accepts / window_draws:.2e} over the last "
                    f"{window_draws} draws; margin_theta={cfg.margin_theta} is too demanding"
                )
            window_draws = 0
            window_accepts = 0
    feats = np.concatenate(kept_feats)[:n]
    labels = np.concatenate(kept_labels)[:n].astype(np.int64)
    missing = np.full(n, MISSING, dtype=np.int64)
    return LabeledDataset(cfg.q_classes, feats, labels, missing.copy())


def corrupt(ds: LabeledDataset, c: ConfusionMatrix, rng: RngStream) -> LabeledDataset:
    """Sample a noisy label for every example from the confusion column of its
    true label (inverse-CDF on one fresh uniform per example).  True labels
    are retained alongside."""
    if not ds.has_true():
        raise ValueError("corrupt needs a dataset with complete true labels")
    if ds.q_classes != c.q_classes:
        raise InvalidConfusionError(
            f"dataset has {ds.q_classes} classes but confusion matrix has {c.q_classes}"
        )
    gen = rng.generator()
    u = gen.random(ds.n)
    cdf = np.cumsum(c.mat, axis=0)  # cdf[p, q] = P(observed <= p+1 | true q+1)
    cols = cdf[:, ds.true_labels].T  # (n, Q)
    noisy = (cols <= u[:, None]).sum(axis=1).astype(np.int64)
    np.clip(noisy, 0, ds.q_classes - 1, out=noisy)
    return LabeledDataset(ds.q_classes, ds.features, ds.true_labels.copy(), noisy)


def _draw_stochastic(gen: np.random.Generator, q: int) -> np.ndarray:
    m = np.zeros((q, q))
    diag = gen.uniform(0.55, 0.95, size=q)
    raw = gen.uniform(0.0, 1.0, size=(q, q))
    np.fill_diagonal(raw, 0.0)
    col_mass = raw.sum(axis=0)
    for col in range(q):
        if col_mass[col] <= 0.0:
            return np.array([])  # forces a resample
        m[:, col] = raw[:, col] * ((1.0 - diag[col]) / col_mass[col])
    m[np.arange(q), np.arange(q)] = diag
    return m


def generate_sweep_matrices(q_classes: int, rng: RngStream) -> tuple[ConfusionMatrix, np.ndarray]:
    """Draw a reference confusion matrix M plus the direction N = (M - I) / 10.

    Diagonals are uniform in [0.55, 0.95]; the remaining column mass is split
    across off-diagonal entries proportionally to independent uniforms.  The
    draw is rejected while I + 20N has a negative entry or a condition
    estimate above SWEEP_CONDITION_LIMIT, so every step of the noise ladder
    I + iN for i in 0..20 stays a usable confusion matrix.
    """
    if q_classes < 2:
        raise ValueError("q_classes must be at least 2")
    gen = rng.generator()
    eye = np.eye(q_classes)
    for _ in range(SWEEP_MAX_ATTEMPTS):
        m = _draw_stochastic(gen, q_classes)
        if m.size == 0:
            continue
        n_dir = (m - eye) / 10.0
        far = eye + 20.0 * n_dir
        if far.min() < 0.0:
            continue
        if matrixcore.condition_estimate(far) > SWEEP_CONDITION_LIMIT:
            continue
        return ConfusionMatrix(q_classes, m), n_dir
    raise GenerationStalledError(
        f"no acceptable sweep matrix within {SWEEP_MAX_ATTEMPTS} attempts for q={q_classes}"
    )


def sweep_level_matrix(n_dir: np.ndarray, level: int) -> ConfusionMatrix:
    """Confusion matrix at one rung of the noise ladder: I + level * N."""
    n_dir = matrixcore.as_matrix(n_dir)
    if not 0 <= level <= 20:
        raise ValueError("level must lie in 0..20")
    q = n_dir.shape[0]
    mat = np.eye(q) + level * n_dir
    try:
        return ConfusionMatrix(q, mat)
    except SingularMatrixError as exc:
        raise InvalidConfusionError(f"level {level} matrix is singular: {exc}") from exc
