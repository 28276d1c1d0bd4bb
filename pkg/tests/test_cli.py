"""Experiment harness: config files, subcommands, sweeps, reproducibility."""

import json
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from unconfused.cli import (
    ESTIMATION_HEADER,
    NOISE_HEADER,
    ExperimentConfig,
    RunRecord,
    _parse_range,
    _stratified_halves,
    _worker_count,
    config_from_dict,
    config_sha256,
    config_to_dict,
    default_config,
    derived_max_iters,
    load_config,
    load_records_json,
    main,
    run_semisup,
    run_sweep_noise,
    save_config,
    write_records_json,
    write_rows_csv,
)
from unconfused.errors import ConfigError
from unconfused.metrics import evaluate, load_report_json
from unconfused.problem import load_dataset_csv, load_model_json
from unconfused.rng import RngStream
from unconfused.synthgen import SynthConfig
from unconfused.uma import UmaConfig


def tiny_config(**overrides) -> ExperimentConfig:
    synth = SynthConfig(q_classes=3, dim=2, n_train=60, n_test=40,
                        margin_theta=0.05, seed=5)
    base = replace(default_config(), synth=synth,
                   uma=UmaConfig(max_iters=500), n_runs=2,
                   sweep_range=(1, 2))
    return replace(base, **overrides) if overrides else base


# ---------------------------------------------------------------------------
# config plumbing


def test_config_round_trip_through_dict_and_file(tmp_path):
    cfg = tiny_config()
    assert config_from_dict(config_to_dict(cfg)) == cfg

    path = tmp_path / "config.json"
    save_config(path, cfg)
    assert load_config(path) == cfg
    assert json.loads(path.read_text())["schema_version"] == 1


def test_config_rejects_unknown_keys_by_name():
    payload = config_to_dict(default_config())
    payload["synth"]["typo_key"] = 1
    with pytest.raises(ConfigError, match="typo_key"):
        config_from_dict(payload)

    payload2 = config_to_dict(default_config())
    payload2["surprise"] = {}
    with pytest.raises(ConfigError, match="surprise"):
        config_from_dict(payload2)


def test_config_rejects_wrong_schema_and_types():
    payload = config_to_dict(default_config())
    payload["schema_version"] = 99
    with pytest.raises(ConfigError, match="schema_version"):
        config_from_dict(payload)

    payload = config_to_dict(default_config())
    payload["n_runs"] = True  # bool is not an acceptable integer
    with pytest.raises(ConfigError, match="n_runs"):
        config_from_dict(payload)


def test_config_defaults_derive_update_cap_from_margin():
    payload = config_to_dict(default_config())
    del payload["uma"]["max_iters"]
    cfg = config_from_dict(payload)
    assert cfg.uma.max_iters == derived_max_iters(cfg.synth.margin_theta)
    assert derived_max_iters(0.025) == 32000


def test_config_sha_changes_with_content():
    a = config_sha256(default_config())
    b = config_sha256(replace(default_config(), n_runs=3))
    assert a != b and len(a) == 64


def test_parse_range_forms():
    assert _parse_range("3:5") == (3, 4, 5)
    assert _parse_range("1,7,2") == (1, 7, 2)
    for bad in ("", "5:3", "a:b", "1,,2", ":"):
        with pytest.raises(ConfigError):
            _parse_range(bad)


def test_worker_count_env(monkeypatch):
    monkeypatch.delenv("UNCONFUSED_THREADS", raising=False)
    assert _worker_count(8) >= 1
    monkeypatch.setenv("UNCONFUSED_THREADS", "3")
    assert _worker_count(8) == 3
    assert _worker_count(2) == 2  # never more workers than tasks
    for bad in ("0", "-2", "many"):
        monkeypatch.setenv("UNCONFUSED_THREADS", bad)
        with pytest.raises(ConfigError):
            _worker_count(8)


def test_stratified_halves_cover_every_label():
    labels = np.array([0, 0, 0, 1, 1, 2, 2, 2, 2, 1])
    gen = RngStream(3).generator()
    first, second = _stratified_halves(labels, 5, gen)
    assert first.size == 5 and second.size == 5
    assert sorted(np.concatenate([first, second]).tolist()) == list(range(10))
    for lab in (0, 1, 2):
        assert (labels[first] == lab).any()
        assert (labels[second] == lab).any()

    # deterministic given the same stream
    again, _ = _stratified_halves(labels, 5, RngStream(3).generator())
    assert np.array_equal(first, again)

    # a single-member label can only reach one half; sizes still exact
    lone = np.array([0, 0, 1])
    first, second = _stratified_halves(lone, 2, RngStream(4).generator())
    assert first.size == 2 and second.size == 1


# ---------------------------------------------------------------------------
# run records


def test_run_record_json_round_trip(tmp_path, compiled_kernels):
    cfg = tiny_config()
    rows, records, telemetry = run_sweep_noise(cfg)
    path = tmp_path / "runs.json"
    write_records_json(path, records)
    back = load_records_json(path)
    assert len(back) == len(records)
    for orig, loaded in zip(records, back):
        assert loaded.run_id == orig.run_id
        assert loaded.learner == orig.learner
        assert loaded.level == orig.level
        assert loaded.report.error_rate == orig.report.error_rate
        assert np.array_equal(loaded.report.confusion_hat,
                              orig.report.confusion_hat)


# ---------------------------------------------------------------------------
# sweeps as library calls


def test_sweep_noise_rows_and_telemetry(compiled_kernels):
    cfg = tiny_config()
    rows, records, telemetry = run_sweep_noise(cfg)
    assert [r["level"] for r in rows] == [1, 2]
    for row in rows:
        assert set(row) == set(NOISE_HEADER)
    # two learners per (run, level)
    assert len(records) == cfg.n_runs * len(cfg.sweep_range) * 2
    assert records == sorted(records,
                             key=lambda r: (r.run_id, r.level, r.learner))
    assert all(passed for _, passed in telemetry.confusion_checks)
    assert telemetry.max_colsum_ratio <= 1e-9
    assert telemetry.max_tau_sum <= 1e-12


def test_sweep_noise_reproducible_rows(compiled_kernels):
    cfg = tiny_config()
    rows_a, _, _ = run_sweep_noise(cfg)
    rows_b, _, _ = run_sweep_noise(cfg)
    assert rows_a == rows_b


def test_semisup_report_structure(compiled_kernels):
    cfg = tiny_config(semisup_pool=400)
    rows, records, telemetry, report = run_semisup(cfg)
    assert report["n_runs"] == cfg.n_runs
    assert 0 <= report["n_skipped"] <= cfg.n_runs
    assert len(rows) == cfg.n_runs
    for row in rows:
        degraded = row["degraded"] == 1
        assert (row["uma_error"] == "") == degraded
    if report["uma_error_mean"] is not None:
        assert "uma_minus_perc" in report and "uma_minus_full" in report
    # deterministic end to end
    _, _, _, report2 = run_semisup(cfg)
    assert report == report2


def test_csv_writer_layout(tmp_path):
    path = tmp_path / "rows.csv"
    write_rows_csv(path, ["a", "b"], [{"a": 1, "b": 0.5}, {"a": 2, "b": ""}],
                   sha="f" * 64, seed=9)
    lines = path.read_text().splitlines()
    assert lines[0] == f"# config_sha256={'f' * 64} seed=9"
    assert lines[1] == "a,b"
    assert lines[2] == "1,0.5"
    assert lines[3] == "2,"


# ---------------------------------------------------------------------------
# subcommands end to end


def write_cfg(tmp_path, cfg) -> str:
    path = tmp_path / "config.json"
    save_config(path, cfg)
    return str(path)


def test_generate_corrupt_train_eval_pipeline(tmp_path, capsys, compiled_kernels):
    cfg_path = write_cfg(tmp_path, tiny_config())
    out = str(tmp_path / "work")

    assert main(["generate", "--config", cfg_path, "--out", out]) == 0
    train_csv = f"{out}/train.csv"
    ds = load_dataset_csv(train_csv, 3)
    assert ds.n == 60 and ds.has_true()

    matrix = tmp_path / "c.json"
    matrix.write_text(json.dumps(
        {"q": 3, "rows": [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]]}))
    corrupted = str(tmp_path / "corrupted.csv")
    assert main(["corrupt", "--config", cfg_path, "--data", train_csv,
                 "--matrix", str(matrix), "--out", corrupted]) == 0
    noisy = load_dataset_csv(corrupted, 3)
    assert noisy.has_noisy() and np.array_equal(noisy.features, ds.features)

    model_dir = str(tmp_path / "model")
    assert main(["train", "--config", cfg_path, "--data", corrupted,
                 "--matrix", str(matrix), "--out", model_dir]) == 0
    model = load_model_json(f"{model_dir}/model.json")
    assert model.q_classes == 3
    trace_lines = open(f"{model_dir}/trace.csv").read().splitlines()
    assert trace_lines[0] == "iter,p,q,norm_z,error_set_size,train_noisy_error"

    report_path = str(tmp_path / "report.json")
    assert main(["eval", "--config", cfg_path, "--model",
                 f"{model_dir}/model.json", "--data", f"{out}/test.csv",
                 "--out", report_path]) == 0
    report = load_report_json(report_path)
    test_ds = load_dataset_csv(f"{out}/test.csv", 3)
    assert report.error_rate == evaluate(model, test_ds).error_rate
    assert "error_rate=" in capsys.readouterr().out


def test_generate_twice_is_byte_identical(tmp_path, compiled_kernels):
    cfg_path = write_cfg(tmp_path, tiny_config())
    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["generate", "--config", cfg_path, "--out", out_a]) == 0
    assert main(["generate", "--config", cfg_path, "--out", out_b]) == 0
    for name in ("concept.json", "train.csv", "test.csv"):
        assert open(f"{out_a}/{name}", "rb").read() == \
               open(f"{out_b}/{name}", "rb").read()


def test_train_uma_without_matrix_is_config_error(tmp_path, capsys, compiled_kernels):
    cfg_path = write_cfg(tmp_path, tiny_config())
    out = str(tmp_path / "w")
    assert main(["generate", "--config", cfg_path, "--out", out]) == 0
    code = main(["train", "--config", cfg_path, "--data", f"{out}/train.csv",
                 "--out", str(tmp_path / "m")])
    assert code == 2
    assert "--matrix" in capsys.readouterr().err


def test_train_singular_matrix_exits_three(tmp_path, capsys, compiled_kernels):
    cfg_path = write_cfg(tmp_path, tiny_config())
    out = str(tmp_path / "w")
    assert main(["generate", "--config", cfg_path, "--out", out]) == 0
    singular = tmp_path / "singular.json"
    singular.write_text(json.dumps(
        {"q": 3, "rows": [[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]]}))
    code = main(["train", "--config", cfg_path, "--data", f"{out}/train.csv",
                 "--matrix", str(singular), "--out", str(tmp_path / "m")])
    assert code == 3
    assert "not invertible" in capsys.readouterr().err


def test_bad_config_file_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1, "wat": 1}))
    assert main(["generate", "--config", str(bad),
                 "--out", str(tmp_path / "o")]) == 2
    assert "wat" in capsys.readouterr().err


def test_unreachable_margin_exits_four(tmp_path, capsys):
    cfg = tiny_config(synth=SynthConfig(q_classes=2, dim=2, n_train=5,
                                        n_test=5, margin_theta=0.999, seed=1))
    cfg_path = write_cfg(tmp_path, cfg)
    assert main(["generate", "--config", cfg_path,
                 "--out", str(tmp_path / "o")]) == 4
    assert "acceptance rate" in capsys.readouterr().err


def test_sweep_noise_command_writes_artifacts(tmp_path, compiled_kernels):
    cfg_path = write_cfg(tmp_path, tiny_config())
    out = str(tmp_path / "sweep")
    assert main(["sweep-noise", "--config", cfg_path, "--out", out]) == 0
    lines = open(f"{out}/sweep_noise.csv").read().splitlines()
    assert lines[0].startswith("# config_sha256=")
    assert lines[1] == ",".join(NOISE_HEADER)
    assert len(lines) == 2 + 2  # comment + header + two levels
    assert load_records_json(f"{out}/runs.json")
    assert json.load(open(f"{out}/diagnostics.json"))["confusion_checks"]


def test_sweep_range_flag_overrides_config(tmp_path, compiled_kernels):
    cfg_path = write_cfg(tmp_path, tiny_config())
    out = str(tmp_path / "sweep")
    assert main(["sweep-estimation", "--config", cfg_path, "--out", out,
                 "--range", "2:3", "--runs", "1"]) == 0
    lines = open(f"{out}/sweep_estimation.csv").read().splitlines()
    assert lines[1] == ",".join(ESTIMATION_HEADER)
    levels = [line.split(",")[0] for line in lines[2:]]
    assert levels == ["2", "3"]


def test_semisup_command_writes_report(tmp_path, compiled_kernels):
    cfg_path = write_cfg(tmp_path, tiny_config(semisup_pool=400))
    out = str(tmp_path / "semi")
    assert main(["semisup", "--config", cfg_path, "--out", out]) == 0
    payload = json.load(open(f"{out}/semisup.json"))
    assert payload["n_runs"] == 2
    assert len(open(f"{out}/semisup.csv").read().splitlines()) == 2 + 2


def test_bounds_command_prints_and_writes(tmp_path, capsys):
    out_csv = str(tmp_path / "bounds.csv")
    assert main(["bounds", "--out", out_csv]) == 0
    printed = capsys.readouterr().out
    assert "epsilon" in printed and "min_m" in printed
    rows = open(out_csv).read().splitlines()
    assert rows[0] == "epsilon,delta,min_m,bound_at_min_m"
    assert len(rows) == 1 + 25


def test_module_entry_point_help():
    proc = subprocess.run(
        [sys.executable, "-m", "unconfused", "--help"],
        capture_output=True, text=True, cwd="/root/pkg")
    assert proc.returncode == 0
    for name in ("generate", "corrupt", "train", "eval", "sweep-noise",
                 "sweep-estimation", "semisup", "bounds"):
        assert name in proc.stdout
