"""Experiment harness and command line.

Subcommands: generate, corrupt, train, eval, sweep-noise, sweep-estimation,
semisup, bounds.  Every experiment is driven by an ExperimentConfig (JSON
file via --config; flags override file values), and every CSV this module
writes starts with a comment line carrying the config hash and base seed, so
a rerun with the same config reproduces the file byte for byte.

Exit codes: 0 success, 2 validation or config error, 3 numerical failure
(singular matrix), 4 generation stalled.

Run-level parallelism is capped by the UNCONFUSED_THREADS environment
variable (default: one worker per CPU, at most one per run).  Runs are
aggregated in run-id order regardless of completion order.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import PerceptronConfig, PerceptronSummary, train_perceptron
from .bounds import sample_size_grid
from .errors import (
    ConfigError,
    GenerationStalledError,
    SingularMatrixError,
    UnconfusedError,
)
from .matrixcore import frobenius_norm
from .metrics import (
    EvalReport,
    estimate_confusion_from_pairs,
    evaluate,
    report_as_dict,
    report_from_dict,
    save_report_json,
)
from .problem import (
    MISSING,
    ConfusionMatrix,
    LabeledDataset,
    _format_float,
    load_confusion_json,
    load_dataset_csv,
    load_model_json,
    predict_batch,
    save_dataset_csv,
    save_model_json,
    validate_confusion,
)
from .rng import RngStream
from .synthgen import (
    SynthConfig,
    corrupt,
    generate_concept,
    generate_dataset,
    generate_sweep_matrices,
    sweep_level_matrix,
)
from .uma import UmaConfig, UmaDiagnostics, save_trace_csv, train

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_STALLED = 4


def derived_max_iters(margin_theta: float) -> int:
    """Default update budget: ten times the separable-case mistake bound when
    the margin is known, otherwise a flat hundred thousand."""
    if margin_theta > 0.0:
        return int(round(10.0 * 2.0 / (margin_theta * margin_theta)))
    return 100_000


@dataclass(frozen=True)
class ExperimentConfig:
    """Bundle of every knob an experiment needs; JSON-serializable."""

    synth: SynthConfig
    uma: UmaConfig
    perceptron: PerceptronConfig
    n_runs: int = 10
    output_dir: str = "runs"
    sweep_range: tuple[int, ...] = tuple(range(1, 21))
    semisup_pool: int = 5000
    semisup_labeled_frac: float = 0.03
    semisup_estimation_split: float = 0.5

    def __post_init__(self):
        if self.n_runs < 1:
            raise ConfigError(f"n_runs must be >= 1, got {self.n_runs}")
        object.__setattr__(self, "sweep_range", tuple(int(i) for i in self.sweep_range))
        if not self.sweep_range:
            raise ConfigError("sweep_range must not be empty")
        for i in self.sweep_range:
            if not 0 <= i <= 20:
                raise ConfigError(f"sweep_range entries must lie in 0..20, got {i}")
        if self.semisup_pool < 10:
            raise ConfigError(f"semisup_pool must be >= 10, got {self.semisup_pool}")
        if not 0 < self.semisup_labeled_frac <= 1:
            raise ConfigError(
                f"semisup_labeled_frac must lie in (0, 1], got {self.semisup_labeled_frac}")
        if not 0 < self.semisup_estimation_split < 1:
            raise ConfigError(
                f"semisup_estimation_split must lie in (0, 1), got {self.semisup_estimation_split}")


def default_config() -> ExperimentConfig:
    synth = SynthConfig()
    return ExperimentConfig(
        synth=synth,
        uma=UmaConfig(max_iters=derived_max_iters(synth.margin_theta)),
        perceptron=PerceptronConfig(),
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "synth": {
            "q_classes": cfg.synth.q_classes,
            "dim": cfg.synth.dim,
            "n_train": cfg.synth.n_train,
            "n_test": cfg.synth.n_test,
            "margin_theta": cfg.synth.margin_theta,
            "seed": cfg.synth.seed,
        },
        "uma": {
            "alpha": cfg.uma.alpha,
            "stop_norm": cfg.uma.stop_norm,
            "max_iters": cfg.uma.max_iters,
            "selection": cfg.uma.selection,
            "step_rule": cfg.uma.step_rule,
        },
        "perceptron": {
            "max_epochs": cfg.perceptron.max_epochs,
            "shuffle": cfg.perceptron.shuffle,
            "seed": cfg.perceptron.seed,
            "label_source": cfg.perceptron.label_source,
        },
        "n_runs": cfg.n_runs,
        "output_dir": cfg.output_dir,
        "sweep_range": list(cfg.sweep_range),
        "semisup": {
            "pool": cfg.semisup_pool,
            "labeled_frac": cfg.semisup_labeled_frac,
            "estimation_split": cfg.semisup_estimation_split,
        },
    }


def _reject_unknown(section: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown config key {where}{unknown[0]!r}")


def _get_int(section: dict, key: str, default: int) -> int:
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
    return value


def _get_float(section: dict, key: str, default: float) -> float:
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config key {key!r} must be a number, got {value!r}")
    return float(value)


def config_from_dict(payload: dict) -> ExperimentConfig:
    """Strict parse: unknown keys anywhere are config errors, so typos fail
    loudly instead of silently running defaults."""
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    version = payload.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")
    _reject_unknown(payload, {"schema_version", "synth", "uma", "perceptron",
                              "n_runs", "output_dir", "sweep_range", "semisup"}, "")

    synth_sec = payload.get("synth", {})
    _reject_unknown(synth_sec, {"q_classes", "dim", "n_train", "n_test",
                                "margin_theta", "seed"}, "synth.")
    base = SynthConfig()
    synth = SynthConfig(
        q_classes=_get_int(synth_sec, "q_classes", base.q_classes),
        dim=_get_int(synth_sec, "dim", base.dim),
        n_train=_get_int(synth_sec, "n_train", base.n_train),
        n_test=_get_int(synth_sec, "n_test", base.n_test),
        margin_theta=_get_float(synth_sec, "margin_theta", base.margin_theta),
        seed=_get_int(synth_sec, "seed", base.seed),
    )

    uma_sec = payload.get("uma", {})
    _reject_unknown(uma_sec, {"alpha", "stop_norm", "max_iters", "selection",
                              "step_rule"}, "uma.")
    uma_base = UmaConfig()
    selection = uma_sec.get("selection", uma_base.selection)
    step_rule = uma_sec.get("step_rule", uma_base.step_rule)
    if not isinstance(selection, str) or not isinstance(step_rule, str):
        raise ConfigError("uma.selection and uma.step_rule must be strings")
    uma = UmaConfig(
        alpha=_get_float(uma_sec, "alpha", uma_base.alpha),
        stop_norm=_get_float(uma_sec, "stop_norm", uma_base.stop_norm),
        max_iters=_get_int(uma_sec, "max_iters", derived_max_iters(synth.margin_theta)),
        selection=selection,
        step_rule=step_rule,
    )

    perc_sec = payload.get("perceptron", {})
    _reject_unknown(perc_sec, {"max_epochs", "shuffle", "seed", "label_source"},
                    "perceptron.")
    perc_base = PerceptronConfig()
    shuffle = perc_sec.get("shuffle", perc_base.shuffle)
    label_source = perc_sec.get("label_source", perc_base.label_source)
    if not isinstance(shuffle, bool):
        raise ConfigError(f"perceptron.shuffle must be a boolean, got {shuffle!r}")
    if not isinstance(label_source, str):
        raise ConfigError("perceptron.label_source must be a string")
    perceptron = PerceptronConfig(
        max_epochs=_get_int(perc_sec, "max_epochs", perc_base.max_epochs),
        shuffle=shuffle,
        seed=_get_int(perc_sec, "seed", perc_base.seed),
        label_source=label_source,
    )

    semi_sec = payload.get("semisup", {})
    _reject_unknown(semi_sec, {"pool", "labeled_frac", "estimation_split"},
                    "semisup.")
    sweep_range = payload.get("sweep_range", list(range(1, 21)))
    if not isinstance(sweep_range, (list, tuple)):
        raise ConfigError("sweep_range must be a list of integers")
    output_dir = payload.get("output_dir", "runs")
    if not isinstance(output_dir, str):
        raise ConfigError(f"output_dir must be a string, got {output_dir!r}")

    return ExperimentConfig(
        synth=synth,
        uma=uma,
        perceptron=perceptron,
        n_runs=_get_int(payload, "n_runs", 10),
        output_dir=output_dir,
        sweep_range=tuple(sweep_range),
        semisup_pool=_get_int(semi_sec, "pool", 5000),
        semisup_labeled_frac=_get_float(semi_sec, "labeled_frac", 0.03),
        semisup_estimation_split=_get_float(semi_sec, "estimation_split", 0.5),
    )


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return config_from_dict(payload)


def save_config(path, cfg: ExperimentConfig) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(config_to_dict(cfg), fh, sort_keys=True, indent=2)
        fh.write("\n")


def config_sha256(cfg: ExperimentConfig) -> str:
    canon = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunRecord:
    """One learner's outcome on one run (and sweep level, when applicable)."""

    run_id: int
    seed: int
    learner: str
    config: dict
    report: EvalReport
    wall_time: float
    iterations: int
    level: int | None = None

    def to_dict(self) -> dict:
        return {"run_id": self.run_id, "seed": self.seed, "learner": self.learner,
                "config": self.config, "report": report_as_dict(self.report),
                "wall_time": self.wall_time, "iterations": self.iterations,
                "level": self.level}

    @staticmethod
    def from_dict(payload: dict) -> "RunRecord":
        return RunRecord(
            run_id=int(payload["run_id"]), seed=int(payload["seed"]),
            learner=str(payload["learner"]), config=payload["config"],
            report=report_from_dict(payload["report"]),
            wall_time=float(payload["wall_time"]),
            iterations=int(payload["iterations"]),
            level=None if payload["level"] is None else int(payload["level"]))


@dataclass
class ExperimentTelemetry:
    """Invariant telemetry pooled across every run of one experiment."""

    backend: str = ""
    max_colsum_ratio: float = 0.0
    max_tau_sum: float = 0.0
    stop_reasons: dict = field(default_factory=dict)
    confusion_checks: list = field(default_factory=list)

    def absorb_uma(self, diag: UmaDiagnostics) -> None:
        self.backend = diag.backend
        self.max_colsum_ratio = max(self.max_colsum_ratio, diag.max_colsum_ratio)
        self.max_tau_sum = max(self.max_tau_sum, diag.max_tau_sum)
        self.stop_reasons[diag.stop_reason] = self.stop_reasons.get(diag.stop_reason, 0) + 1

    def absorb_perceptron(self, summary: PerceptronSummary) -> None:
        self.backend = summary.backend
        self.max_colsum_ratio = max(self.max_colsum_ratio, summary.max_colsum_ratio)

    def check_confusion(self, name: str, mat) -> bool:
        passed = bool(validate_confusion(mat).passed)
        self.confusion_checks.append((name, passed))
        return passed

    def as_dict(self) -> dict:
        return {"backend": self.backend,
                "max_colsum_ratio": self.max_colsum_ratio,
                "max_tau_sum": self.max_tau_sum,
                "stop_reasons": dict(sorted(self.stop_reasons.items())),
                "confusion_checks": [[name, ok] for name, ok in self.confusion_checks]}


def _worker_count(n_tasks: int) -> int:
    raw = os.environ.get("UNCONFUSED_THREADS", "").strip()
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(f"UNCONFUSED_THREADS must be an integer, got {raw!r}") from None
        if cap < 1:
            raise ConfigError(f"UNCONFUSED_THREADS must be >= 1, got {cap}")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_tasks))


def _map_runs(fn, tasks: list):
    workers = _worker_count(len(tasks))
    if workers == 1:
        return [fn(task) for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _seed64(stream: RngStream) -> int:
    return int(stream.generator().integers(0, 2 ** 64, dtype=np.uint64))


# ---------------------------------------------------------------------------
# experiment pipelines (importable; the CLI wraps these)


def run_sweep_noise(cfg: ExperimentConfig):
    """Noise ladder: per run draw one concept/train/test triple, then corrupt
    the train set at every level i (matrix I + i*N), train the corrected
    learner (given the true level matrix) and the noisy-label perceptron, and
    evaluate both on the clean test set.

    Returns (rows, records, telemetry): one aggregate row per level with
    means and population standard deviations over runs.
    """
    base = RngStream(cfg.synth.seed)
    telemetry = ExperimentTelemetry()
    ref, n_dir = generate_sweep_matrices(cfg.synth.q_classes, base.child("sweep-matrices"))
    telemetry.check_confusion("reference", ref)
    levels = {}
    for i in cfg.sweep_range:
        levels[i] = sweep_level_matrix(n_dir, i)
        telemetry.check_confusion(f"level-{i}", levels[i])
    snapshot = config_to_dict(cfg)

    def one_run(run_id: int):
        stream = base.child("run", run_id)
        concept = generate_concept(cfg.synth, stream.child("concept"))
        train_clean = generate_dataset(cfg.synth, concept, stream.child("train"))
        test = generate_dataset(cfg.synth, concept, stream.child("test"),
                                n=cfg.synth.n_test)
        out = []
        for i in cfg.sweep_range:
            noisy = corrupt(train_clean, levels[i], stream.child("corrupt", i))
            diag = UmaDiagnostics()
            t0 = time.perf_counter()
            model, traces = train(noisy, levels[i], cfg.uma, stream.child("uma", i),
                                  diagnostics=diag)
            uma_time = time.perf_counter() - t0
            summary = PerceptronSummary()
            pcfg = replace(cfg.perceptron, label_source="noisy",
                           seed=_seed64(stream.child("perc", i)))
            t0 = time.perf_counter()
            perc_model = train_perceptron(noisy, pcfg, summary=summary)
            perc_time = time.perf_counter() - t0
            out.append({
                "run_id": run_id, "level": i,
                "uma_report": evaluate(model, test),
                "perc_report": evaluate(perc_model, test),
                "uma_diag": diag, "perc_summary": summary,
                "uma_iters": len(traces), "uma_time": uma_time,
                "perc_time": perc_time,
            })
        return out

    results = _map_runs(one_run, list(range(cfg.n_runs)))
    records = []
    for run_out in results:
        for cell in run_out:
            telemetry.absorb_uma(cell["uma_diag"])
            telemetry.absorb_perceptron(cell["perc_summary"])
            records.append(RunRecord(
                run_id=cell["run_id"], seed=cfg.synth.seed, learner="uma",
                config=snapshot, report=cell["uma_report"],
                wall_time=cell["uma_time"], iterations=cell["uma_iters"],
                level=cell["level"]))
            records.append(RunRecord(
                run_id=cell["run_id"], seed=cfg.synth.seed, learner="perceptron",
                config=snapshot, report=cell["perc_report"],
                wall_time=cell["perc_time"],
                iterations=cell["perc_summary"].updates, level=cell["level"]))
    records.sort(key=lambda r: (r.run_id, r.level, r.learner))

    rows = []
    for i in cfg.sweep_range:
        uma_rates = [c["uma_report"].confusion_rate for run in results for c in run if c["level"] == i]
        perc_rates = [c["perc_report"].confusion_rate for run in results for c in run if c["level"] == i]
        uma_off = [c["uma_report"].offdiag_rate for run in results for c in run if c["level"] == i]
        perc_off = [c["perc_report"].offdiag_rate for run in results for c in run if c["level"] == i]
        uma_err = [c["uma_report"].error_rate for run in results for c in run if c["level"] == i]
        perc_err = [c["perc_report"].error_rate for run in results for c in run if c["level"] == i]
        rows.append({
            "level": i,
            "fro_c": frobenius_norm(levels[i].mat),
            "uma_confusion_mean": float(np.mean(uma_rates)),
            "uma_confusion_std": float(np.std(uma_rates)),
            "perc_confusion_mean": float(np.mean(perc_rates)),
            "perc_confusion_std": float(np.std(perc_rates)),
            "uma_offdiag_mean": float(np.mean(uma_off)),
            "perc_offdiag_mean": float(np.mean(perc_off)),
            "uma_error_mean": float(np.mean(uma_err)),
            "perc_error_mean": float(np.mean(perc_err)),
        })
    return rows, records, telemetry


def run_sweep_estimation(cfg: ExperimentConfig):
    """Estimation-robustness ladder: data is corrupted once per run with the
    reference matrix, then the corrected learner is handed the level matrix
    I + i*N instead (approximation factor 1 - i/10; factor 0 is the truth).
    A noisy-label perceptron per run gives the uncorrected reference."""
    base = RngStream(cfg.synth.seed)
    telemetry = ExperimentTelemetry()
    ref, n_dir = generate_sweep_matrices(cfg.synth.q_classes, base.child("sweep-matrices"))
    telemetry.check_confusion("reference", ref)
    levels = {}
    for i in cfg.sweep_range:
        levels[i] = sweep_level_matrix(n_dir, i)
        telemetry.check_confusion(f"level-{i}", levels[i])
    snapshot = config_to_dict(cfg)

    def one_run(run_id: int):
        stream = base.child("run", run_id)
        concept = generate_concept(cfg.synth, stream.child("concept"))
        train_clean = generate_dataset(cfg.synth, concept, stream.child("train"))
        test = generate_dataset(cfg.synth, concept, stream.child("test"),
                                n=cfg.synth.n_test)
        noisy = corrupt(train_clean, ref, stream.child("corrupt"))
        summary = PerceptronSummary()
        pcfg = replace(cfg.perceptron, label_source="noisy",
                       seed=_seed64(stream.child("perc")))
        t0 = time.perf_counter()
        perc_model = train_perceptron(noisy, pcfg, summary=summary)
        perc_time = time.perf_counter() - t0
        cells = []
        for i in cfg.sweep_range:
            diag = UmaDiagnostics()
            t0 = time.perf_counter()
            model, traces = train(noisy, levels[i], cfg.uma, stream.child("uma", i),
                                  diagnostics=diag)
            uma_time = time.perf_counter() - t0
            cells.append({
                "run_id": run_id, "level": i,
                "uma_report": evaluate(model, test),
                "uma_diag": diag, "uma_iters": len(traces), "uma_time": uma_time,
            })
        return {"cells": cells, "perc_report": evaluate(perc_model, test),
                "perc_summary": summary, "perc_time": perc_time, "run_id": run_id}

    results = _map_runs(one_run, list(range(cfg.n_runs)))
    records = []
    for run_out in results:
        telemetry.absorb_perceptron(run_out["perc_summary"])
        records.append(RunRecord(
            run_id=run_out["run_id"], seed=cfg.synth.seed, learner="perceptron",
            config=snapshot, report=run_out["perc_report"],
            wall_time=run_out["perc_time"],
            iterations=run_out["perc_summary"].updates, level=None))
        for cell in run_out["cells"]:
            telemetry.absorb_uma(cell["uma_diag"])
            records.append(RunRecord(
                run_id=cell["run_id"], seed=cfg.synth.seed, learner="uma",
                config=snapshot, report=cell["uma_report"],
                wall_time=cell["uma_time"], iterations=cell["uma_iters"],
                level=cell["level"]))
    records.sort(key=lambda r: (r.run_id, -1 if r.level is None else r.level, r.learner))

    perc_rates = [r["perc_report"].confusion_rate for r in results]
    perc_mean = float(np.mean(perc_rates))
    rows = []
    for i in cfg.sweep_range:
        cells = [c for r in results for c in r["cells"] if c["level"] == i]
        rates = [c["uma_report"].confusion_rate for c in cells]
        rows.append({
            "level": i,
            "factor": (10 - i) / 10,
            "fro_c": frobenius_norm(levels[i].mat),
            "uma_confusion_mean": float(np.mean(rates)),
            "uma_confusion_std": float(np.std(rates)),
            "uma_offdiag_mean": float(np.mean([c["uma_report"].offdiag_rate for c in cells])),
            "uma_error_mean": float(np.mean([c["uma_report"].error_rate for c in cells])),
            "perc_confusion_mean": perc_mean,
        })
    return rows, records, telemetry


def _stratified_halves(labels: np.ndarray, n_first: int, gen):
    """Deal positions into two halves, alternating within each label group.

    Every label with two or more members reaches both halves; the first half
    is then rebalanced to exactly n_first positions by moving members of the
    labels best represented on the oversized side.
    """
    first: list[int] = []
    second: list[int] = []
    start = 0
    for lab in np.unique(labels):
        members = np.flatnonzero(labels == lab)
        members = members[gen.permutation(members.shape[0])]
        for j, pos in enumerate(members):
            (first if (j + start) % 2 == 0 else second).append(int(pos))
        if members.shape[0] % 2 == 1:
            start ^= 1
    donor, taker = (first, second) if len(first) > n_first else (second, first)
    while len(first) != n_first and donor:
        counts: dict[int, int] = {}
        for pos in donor:
            counts[int(labels[pos])] = counts.get(int(labels[pos]), 0) + 1
        lab = max(counts, key=lambda k: (counts[k], -k))
        for i in range(len(donor) - 1, -1, -1):
            if int(labels[donor[i]]) == lab:
                taker.append(donor.pop(i))
                break
    return (np.sort(np.asarray(first, dtype=np.int64)),
            np.sort(np.asarray(second, dtype=np.int64)))


def run_semisup(cfg: ExperimentConfig):
    """Bootstrap-relabel pipeline, once per run:

    1. generate a clean pool and a clean test set;
    2. mark a small labeled subset (semisup_labeled_frac of the pool);
    3. split the subset into label-stratified halves and train a bootstrap
       perceptron on the true labels of one half;
    4. relabel the whole pool with it -- these become the noisy labels;
    5. estimate the confusion matrix from the other half's (true, relabeled)
       pairs;
    6. train the corrected learner on the relabeled pool with that estimate
       (skipped when the estimate is degraded or singular);
    7. evaluate everything on the clean test set.
    """
    base = RngStream(cfg.synth.seed)
    telemetry = ExperimentTelemetry()
    snapshot = config_to_dict(cfg)

    def one_run(run_id: int):
        stream = base.child("semisup", run_id)
        concept = generate_concept(cfg.synth, stream.child("concept"))
        pool = generate_dataset(cfg.synth, concept, stream.child("pool"),
                                n=cfg.semisup_pool)
        test = generate_dataset(cfg.synth, concept, stream.child("test"),
                                n=cfg.synth.n_test)
        n_labeled = int(round(pool.n * cfg.semisup_labeled_frac))
        n_est = int(round(n_labeled * cfg.semisup_estimation_split))
        n_boot = n_labeled - n_est
        if n_boot < 1 or n_est < 1:
            raise ConfigError(
                f"labeled subset of {n_labeled} examples cannot be split into "
                f"bootstrap and estimation parts")
        perm = stream.child("labeled-split").generator().permutation(pool.n)
        labeled_idx = perm[:n_labeled]
        est_pos, boot_pos = _stratified_halves(
            pool.true_labels[labeled_idx], n_est,
            stream.child("half-split").generator())
        est_idx = np.sort(labeled_idx[est_pos])
        boot_idx = np.sort(labeled_idx[boot_pos])

        boot_ds = LabeledDataset(cfg.synth.q_classes, pool.features[boot_idx],
                                 pool.true_labels[boot_idx],
                                 np.full(n_boot, MISSING, dtype=np.int64))
        boot_summary = PerceptronSummary()
        boot_model = train_perceptron(
            boot_ds, replace(cfg.perceptron, label_source="true",
                             seed=_seed64(stream.child("bootstrap"))),
            summary=boot_summary)
        relabel = predict_batch(boot_model, pool.features)
        relabeled = LabeledDataset(cfg.synth.q_classes, pool.features,
                                   pool.true_labels, relabel)
        est_pairs = LabeledDataset(cfg.synth.q_classes, pool.features[est_idx],
                                   pool.true_labels[est_idx], relabel[est_idx])
        estimate = estimate_confusion_from_pairs(est_pairs)

        perc_summary = PerceptronSummary()
        perc_model = train_perceptron(
            relabeled, replace(cfg.perceptron, label_source="noisy",
                               seed=_seed64(stream.child("perc"))),
            summary=perc_summary)
        full_summary = PerceptronSummary()
        full_model = train_perceptron(
            relabeled, replace(cfg.perceptron, label_source="true",
                               seed=_seed64(stream.child("perc-full"))),
            summary=full_summary)

        cell = {
            "run_id": run_id,
            "boot_report": evaluate(boot_model, test),
            "perc_report": evaluate(perc_model, test),
            "full_report": evaluate(full_model, test),
            "boot_summary": boot_summary,
            "perc_summary": perc_summary,
            "full_summary": full_summary,
            "estimate": estimate,
            "uma_report": None, "uma_diag": None, "uma_iters": 0,
            "uma_time": 0.0, "problems": (),
        }
        if isinstance(estimate, ConfusionMatrix):
            diag = UmaDiagnostics()
            t0 = time.perf_counter()
            model, traces = train(relabeled, estimate, cfg.uma,
                                  stream.child("uma"), diagnostics=diag)
            cell["uma_time"] = time.perf_counter() - t0
            cell["uma_report"] = evaluate(model, test)
            cell["uma_diag"] = diag
            cell["uma_iters"] = len(traces)
        else:
            cell["problems"] = estimate.problems
        return cell

    results = _map_runs(one_run, list(range(cfg.n_runs)))
    records = []
    for cell in results:
        for name, key, summary_key in (
                ("bootstrap", "boot_report", "boot_summary"),
                ("perceptron", "perc_report", "perc_summary"),
                ("perceptron-full", "full_report", "full_summary")):
            summary = cell[summary_key]
            telemetry.absorb_perceptron(summary)
            records.append(RunRecord(
                run_id=cell["run_id"], seed=cfg.synth.seed, learner=name,
                config=snapshot, report=cell[key], wall_time=0.0,
                iterations=summary.updates, level=None))
        if cell["uma_report"] is not None:
            telemetry.absorb_uma(cell["uma_diag"])
            if isinstance(cell["estimate"], ConfusionMatrix):
                telemetry.check_confusion(f"estimate-run-{cell['run_id']}",
                                          cell["estimate"])
            records.append(RunRecord(
                run_id=cell["run_id"], seed=cfg.synth.seed, learner="uma",
                config=snapshot, report=cell["uma_report"],
                wall_time=cell["uma_time"], iterations=cell["uma_iters"],
                level=None))
    records.sort(key=lambda r: (r.run_id, r.learner))

    ran = [c for c in results if c["uma_report"] is not None]
    report = {
        "n_runs": cfg.n_runs,
        "n_skipped": len(results) - len(ran),
        "skip_problems": sorted({p for c in results for p in c["problems"]}),
        "boot_error_mean": float(np.mean([c["boot_report"].error_rate for c in results])),
        "perc_error_mean": float(np.mean([c["perc_report"].error_rate for c in results])),
        "full_error_mean": float(np.mean([c["full_report"].error_rate for c in results])),
        "uma_error_mean": float(np.mean([c["uma_report"].error_rate for c in ran])) if ran else None,
    }
    if ran:
        report["uma_minus_perc"] = report["uma_error_mean"] - report["perc_error_mean"]
        report["uma_minus_full"] = report["uma_error_mean"] - report["full_error_mean"]
    rows = []
    for cell in results:
        rows.append({
            "run_id": cell["run_id"],
            "degraded": 0 if cell["uma_report"] is not None else 1,
            "uma_error": cell["uma_report"].error_rate if cell["uma_report"] else "",
            "perc_error": cell["perc_report"].error_rate,
            "full_error": cell["full_report"].error_rate,
            "boot_error": cell["boot_report"].error_rate,
            "uma_confusion": cell["uma_report"].confusion_rate if cell["uma_report"] else "",
            "perc_confusion": cell["perc_report"].confusion_rate,
        })
    return rows, records, telemetry, report


# ---------------------------------------------------------------------------
# file emission


def _fmt_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return _format_float(value)


def write_rows_csv(path, header: list[str], rows: list[dict], sha: str, seed: int) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_sha256={sha} seed={seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(row[col]) for col in header])


def write_records_json(path, records: list[RunRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"records": [r.to_dict() for r in records]}, fh, sort_keys=True)
        fh.write("\n")


def load_records_json(path) -> list[RunRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return [RunRecord.from_dict(p) for p in payload["records"]]


def write_telemetry_json(path, telemetry: ExperimentTelemetry) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(telemetry.as_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


NOISE_HEADER = ["level", "fro_c", "uma_confusion_mean", "uma_confusion_std",
                "perc_confusion_mean", "perc_confusion_std", "uma_offdiag_mean",
                "perc_offdiag_mean", "uma_error_mean", "perc_error_mean"]
ESTIMATION_HEADER = ["level", "factor", "fro_c", "uma_confusion_mean",
                     "uma_confusion_std", "uma_offdiag_mean", "uma_error_mean",
                     "perc_confusion_mean"]
SEMISUP_HEADER = ["run_id", "degraded", "uma_error", "perc_error", "full_error",
                  "boot_error", "uma_confusion", "perc_confusion"]


# ---------------------------------------------------------------------------
# subcommand handlers


def _outdir(cfg: ExperimentConfig, args) -> str:
    out = args.out if args.out else cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = replace(cfg, synth=replace(cfg.synth, seed=args.seed))
    if getattr(args, "runs", None) is not None:
        cfg = replace(cfg, n_runs=args.runs)
    uma_cfg = cfg.uma
    if getattr(args, "selection", None):
        uma_cfg = replace(uma_cfg, selection=args.selection)
    if getattr(args, "alpha", None) is not None:
        uma_cfg = replace(uma_cfg, alpha=args.alpha)
    if getattr(args, "stop_norm", None) is not None:
        uma_cfg = replace(uma_cfg, stop_norm=args.stop_norm)
    if getattr(args, "max_iters", None) is not None:
        uma_cfg = replace(uma_cfg, max_iters=args.max_iters)
    if uma_cfg is not cfg.uma:
        cfg = replace(cfg, uma=uma_cfg)
    if getattr(args, "range", None):
        cfg = replace(cfg, sweep_range=_parse_range(args.range))
    if getattr(args, "pool", None) is not None:
        cfg = replace(cfg, semisup_pool=args.pool)
    if getattr(args, "labeled_frac", None) is not None:
        cfg = replace(cfg, semisup_labeled_frac=args.labeled_frac)
    return cfg


def _parse_range(text: str) -> tuple[int, ...]:
    text = text.strip()
    try:
        if ":" in text:
            lo, hi = text.split(":", 1)
            values = tuple(range(int(lo), int(hi) + 1))
        else:
            values = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse sweep range {text!r}; "
                          f"use 'lo:hi' or comma-separated integers") from None
    if not values:
        raise ConfigError(f"sweep range {text!r} is empty")
    return values


def cmd_generate(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(cfg, args)
    sha = config_sha256(cfg)
    base = RngStream(cfg.synth.seed)
    concept = generate_concept(cfg.synth, base.child("concept"))
    train_ds = generate_dataset(cfg.synth, concept, base.child("train"))
    test_ds = generate_dataset(cfg.synth, concept, base.child("test"),
                               n=cfg.synth.n_test)
    save_model_json(os.path.join(out, "concept.json"), concept)
    tag = f"config_sha256={sha} seed={cfg.synth.seed}"
    save_dataset_csv(os.path.join(out, "train.csv"), train_ds, comment=tag)
    save_dataset_csv(os.path.join(out, "test.csv"), test_ds, comment=tag)
    print(f"wrote concept.json, train.csv ({train_ds.n} rows), "
          f"test.csv ({test_ds.n} rows) to {out}")
    return EXIT_OK


def cmd_corrupt(args) -> int:
    cfg = _load_cfg(args)
    confusion = load_confusion_json(args.matrix)
    ds = load_dataset_csv(args.data, confusion.q_classes,
                          renormalize=args.renormalize)
    noisy = corrupt(ds, confusion, RngStream(cfg.synth.seed).child("corrupt"))
    out_path = args.out if args.out else "corrupted.csv"
    save_dataset_csv(out_path, noisy,
                     comment=f"config_sha256={config_sha256(cfg)} seed={cfg.synth.seed}")
    print(f"wrote {noisy.n} corrupted rows to {out_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(cfg, args)
    if args.learner == "uma" and not args.matrix:
        raise ConfigError("training the corrected learner requires --matrix")
    if args.matrix:
        confusion = load_confusion_json(args.matrix)
        q = confusion.q_classes
    else:
        confusion = None
        if args.q is None:
            raise ConfigError("--q is required when no --matrix is given")
        q = args.q
    ds = load_dataset_csv(args.data, q, renormalize=args.renormalize)
    if args.learner == "uma":
        diag = UmaDiagnostics()
        t0 = time.perf_counter()
        model, traces = train(ds, confusion, cfg.uma,
                              RngStream(cfg.synth.seed).child("uma"),
                              diagnostics=diag)
        wall = time.perf_counter() - t0
        save_model_json(os.path.join(out, "model.json"), model)
        save_trace_csv(os.path.join(out, "trace.csv"), traces)
        with open(os.path.join(out, "diagnostics.json"), "w", encoding="utf-8",
                  newline="\n") as fh:
            json.dump(diag.as_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
        print(f"uma: {len(traces)} updates, stop={diag.stop_reason}, "
              f"{wall:.2f}s; model.json and trace.csv in {out}")
    else:
        summary = PerceptronSummary()
        pcfg = replace(cfg.perceptron, label_source=args.label_source,
                       seed=cfg.synth.seed)
        t0 = time.perf_counter()
        model = train_perceptron(ds, pcfg, summary=summary)
        wall = time.perf_counter() - t0
        save_model_json(os.path.join(out, "model.json"), model)
        with open(os.path.join(out, "diagnostics.json"), "w", encoding="utf-8",
                  newline="\n") as fh:
            json.dump(summary.as_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
        print(f"perceptron: {summary.updates} updates over "
              f"{summary.epochs_run} epochs, converged={summary.converged}, "
              f"{wall:.2f}s; model.json in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model_json(args.model)
    ds = load_dataset_csv(args.data, model.q_classes,
                          renormalize=args.renormalize)
    report = evaluate(model, ds)
    out_path = args.out if args.out else "report.json"
    save_report_json(out_path, report)
    print(f"error_rate={report.error_rate:.6f} "
          f"confusion_rate={report.confusion_rate:.6f} "
          f"offdiag_rate={report.offdiag_rate:.6f} -> {out_path}")
    return EXIT_OK


def cmd_sweep_noise(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(cfg, args)
    rows, records, telemetry = run_sweep_noise(cfg)
    sha = config_sha256(cfg)
    write_rows_csv(os.path.join(out, "sweep_noise.csv"), NOISE_HEADER, rows,
                   sha, cfg.synth.seed)
    write_records_json(os.path.join(out, "runs.json"), records)
    write_telemetry_json(os.path.join(out, "diagnostics.json"), telemetry)
    better = sum(1 for r in rows if r["uma_confusion_mean"] >= r["perc_confusion_mean"])
    print(f"sweep-noise: {len(rows)} levels x {cfg.n_runs} runs "
          f"({telemetry.backend} backend); corrected learner at or above the "
          f"baseline's concentration on {better}/{len(rows)} levels; "
          f"files in {out}")
    return EXIT_OK


def cmd_sweep_estimation(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(cfg, args)
    rows, records, telemetry = run_sweep_estimation(cfg)
    sha = config_sha256(cfg)
    write_rows_csv(os.path.join(out, "sweep_estimation.csv"), ESTIMATION_HEADER,
                   rows, sha, cfg.synth.seed)
    write_records_json(os.path.join(out, "runs.json"), records)
    write_telemetry_json(os.path.join(out, "diagnostics.json"), telemetry)
    print(f"sweep-estimation: {len(rows)} levels x {cfg.n_runs} runs "
          f"({telemetry.backend} backend); files in {out}")
    return EXIT_OK


def cmd_semisup(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(cfg, args)
    rows, records, telemetry, report = run_semisup(cfg)
    sha = config_sha256(cfg)
    write_rows_csv(os.path.join(out, "semisup.csv"), SEMISUP_HEADER, rows,
                   sha, cfg.synth.seed)
    write_records_json(os.path.join(out, "runs.json"), records)
    write_telemetry_json(os.path.join(out, "diagnostics.json"), telemetry)
    with open(os.path.join(out, "semisup.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    if report["uma_error_mean"] is None:
        print(f"semisup: all {cfg.n_runs} runs degraded, corrected learner "
              f"skipped; files in {out}")
    else:
        print(f"semisup: mean errors uma={report['uma_error_mean']:.4f} "
              f"perc={report['perc_error_mean']:.4f} "
              f"full={report['full_error_mean']:.4f} "
              f"({report['n_skipped']} skipped); files in {out}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    epsilons = [float(v) for v in args.epsilons.split(",") if v.strip()]
    deltas = [float(v) for v in args.deltas.split(",") if v.strip()]
    grid = sample_size_grid(epsilons, deltas, args.d, args.q)
    print(f"{'epsilon':>10} {'delta':>10} {'min_m':>12} {'bound_at_min_m':>16}")
    for row in grid:
        print(f"{row['epsilon']:>10.4g} {row['delta']:>10.4g} "
              f"{row['min_m']:>12d} {row['bound_at_min_m']:>16.6e}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epsilon", "delta", "min_m", "bound_at_min_m"])
            for row in grid:
                writer.writerow([_format_float(row["epsilon"]),
                                 _format_float(row["delta"]), row["min_m"],
                                 _format_float(row["bound_at_min_m"])])
        print(f"wrote {len(grid)} rows to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config JSON")
    common.add_argument("--seed", type=int, metavar="U64",
                        help="override the base seed")
    common.add_argument("--out", metavar="DIR", help="output directory or file")
    common.add_argument("--runs", type=int, metavar="N",
                        help="override the number of runs")
    common.add_argument("--selection", choices=["error", "confusion", "random"],
                        help="candidate selection strategy")
    common.add_argument("--alpha", type=float, metavar="F",
                        help="confidence threshold for regions and error sets")
    common.add_argument("--stop-norm", type=float, metavar="F", dest="stop_norm",
                        help="norm below which candidates are ignored")

    parser = argparse.ArgumentParser(
        prog="unconfused",
        description="Train and evaluate linear classifiers from label-noise-"
                    "corrupted data, given the noise's confusion matrix.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common],
                       help="write a concept and clean train/test data")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("corrupt", parents=[common],
                       help="corrupt a dataset's labels under a confusion matrix")
    p.add_argument("--data", required=True, metavar="CSV")
    p.add_argument("--matrix", required=True, metavar="JSON")
    p.add_argument("--renormalize", action="store_true",
                   help="rescale non-unit feature rows instead of rejecting them")
    p.set_defaults(handler=cmd_corrupt)

    p = sub.add_parser("train", parents=[common], help="train one learner")
    p.add_argument("--data", required=True, metavar="CSV")
    p.add_argument("--matrix", metavar="JSON",
                   help="confusion matrix (required for the corrected learner)")
    p.add_argument("--learner", choices=["uma", "perceptron"], default="uma")
    p.add_argument("--label-source", choices=["noisy", "true"], default="noisy",
                   dest="label_source", help="perceptron supervision column")
    p.add_argument("--max-iters", type=int, dest="max_iters", metavar="N")
    p.add_argument("--q", type=int, metavar="Q",
                   help="class count when no matrix is given")
    p.add_argument("--renormalize", action="store_true")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", parents=[common],
                       help="evaluate a saved model on a dataset")
    p.add_argument("--model", required=True, metavar="JSON")
    p.add_argument("--data", required=True, metavar="CSV")
    p.add_argument("--renormalize", action="store_true")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("sweep-noise", parents=[common],
                       help="train at every noise level of a random ladder")
    p.add_argument("--range", metavar="LO:HI",
                   help="sweep levels, 'lo:hi' or comma list (default 1:20)")
    p.set_defaults(handler=cmd_sweep_noise)

    p = sub.add_parser("sweep-estimation", parents=[common],
                       help="train with mismatched matrices at fixed noise")
    p.add_argument("--range", metavar="LO:HI")
    p.set_defaults(handler=cmd_sweep_estimation)

    p = sub.add_parser("semisup", parents=[common],
                       help="bootstrap-relabel pipeline from a small labeled subset")
    p.add_argument("--pool", type=int, metavar="N", help="clean pool size")
    p.add_argument("--labeled-frac", type=float, dest="labeled_frac",
                   metavar="F", help="fraction of the pool that is labeled")
    p.set_defaults(handler=cmd_semisup)

    p = sub.add_parser("bounds", parents=[common],
                       help="print the sample-size table over an (epsilon, delta) grid")
    p.add_argument("--epsilons", default="4,2,1,0.5,0.25", metavar="LIST")
    p.add_argument("--deltas", default="0.2,0.1,0.05,0.01,0.001", metavar="LIST")
    p.add_argument("--d", type=int, default=2, metavar="D")
    p.add_argument("--q", type=int, default=2, metavar="Q")
    p.set_defaults(handler=cmd_bounds)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except GenerationStalledError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STALLED
    except SingularMatrixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UnconfusedError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def console_main() -> None:
    sys.exit(main())
