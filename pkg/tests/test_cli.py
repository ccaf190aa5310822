"""Command-line surface: formats, exit codes, determinism and schema validity."""

import json
import os
from pathlib import Path

import numpy as np
import pytest
from jsonschema import Draft202012Validator
from referencing import Registry, Resource

from ordsoft.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main, summarise_records

SCHEMA_DIR = Path(__file__).resolve().parents[1] / "src" / "ordsoft" / "schemas"


def _validator(name: str) -> Draft202012Validator:
    schemas = {}
    registry = Registry()
    for path in SCHEMA_DIR.glob("*.schema.json"):
        schema = json.loads(path.read_text())
        schemas[schema["$id"]] = schema
        registry = registry.with_resource(schema["$id"], Resource.from_contents(schema))
    return Draft202012Validator(schemas[name], registry=registry)


def _validate(name: str, doc: dict) -> None:
    _validator(name).validate(doc)


# ---------------------------------------------------------------- softlabels


def test_softlabels_triangular_matrix(capsys):
    assert main(["softlabels", "--classes", "4", "--strategy", "triangular",
                 "--alpha", "0.10", "--eta", "1.0"]) == EXIT_OK
    rows = [list(map(float, line.split(","))) for line in capsys.readouterr().out.splitlines()]
    np.testing.assert_allclose(rows[0], [0.9, 0.1, 0, 0])
    np.testing.assert_allclose(rows[1], [0.1, 0.8, 0.1, 0])


def test_softlabels_nominal_identity(capsys):
    assert main(["softlabels", "--classes", "5", "--strategy", "nominal"]) == EXIT_OK
    rows = [list(map(float, line.split(","))) for line in capsys.readouterr().out.splitlines()]
    np.testing.assert_array_equal(np.asarray(rows), np.eye(5))


def test_softlabels_exponential_row(capsys):
    assert main(["softlabels", "--classes", "4", "--strategy", "exponential", "--p", "1.0"]) == EXIT_OK
    first = list(map(float, capsys.readouterr().out.splitlines()[0].split(",")))
    np.testing.assert_allclose(first, [0.6439, 0.2369, 0.0871, 0.0321], atol=1e-4)


def test_softlabels_plot_data(capsys):
    assert main(["softlabels", "--classes", "3", "--strategy", "binomial", "--plot-data"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "strategy,true_grade,grade,mass"
    assert len(lines) == 1 + 9


def test_softlabels_bad_params_is_usage_error(capsys):
    assert main(["softlabels", "--classes", "4", "--strategy", "triangular"]) == EXIT_USAGE
    assert main(["softlabels", "--classes", "4", "--strategy", "beta", "--eta", "1.5",
                 "--concentration", "5"]) == EXIT_USAGE
    assert main(["softlabels", "--classes", "4"]) == EXIT_USAGE  # missing --strategy


# --------------------------------------------------------------------- synth


def test_synth_writes_deterministic_csv(tmp_path):
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["synth", "--classes", "3", "--per-class", "8", "--flip-prob", "0.2", "--seed", "4"]
    assert main(args + ["--out", str(out_a)]) == EXIT_OK
    assert main(args + ["--out", str(out_b)]) == EXIT_OK
    assert out_a.read_bytes() == out_b.read_bytes()
    assert out_a.read_text().splitlines()[0].endswith(",label")


def test_synth_paired_writes_dataset_and_truth(tmp_path):
    out = tmp_path / "paired.csv"
    truth = tmp_path / "truth.csv"
    assert main([
        "synth", "--paired", "--classes-a", "4", "--classes-b", "3", "--n", "200",
        "--seed", "1", "--out", str(out), "--truth-out", str(truth),
    ]) == EXIT_OK
    header = out.read_text().splitlines()[0]
    assert header.endswith("label_a,label_b")
    truth_lines = truth.read_text().splitlines()
    assert truth_lines[0].startswith("A\\B")
    counts = np.array([[int(v) for v in line.split(",")[1:]] for line in truth_lines[1:]])
    assert counts.sum() == 200


def test_synth_invalid_spec_usage_error(tmp_path):
    assert main(["synth", "--classes", "1", "--out", str(tmp_path / "x.csv")]) == EXIT_USAGE


# ------------------------------------------------------------ train/evaluate


def test_train_appends_valid_record(tmp_path):
    data = tmp_path / "data.csv"
    out = tmp_path / "runs.jsonl"
    main(["synth", "--classes", "3", "--per-class", "30", "--noise-sd", "0.4",
          "--flip-prob", "0.1", "--seed", "2", "--out", str(data)])
    assert main([
        "train", "--data", str(data), "--strategy", "triangular", "--alpha", "0.05",
        "--eta", "0.8", "--learning-rate", "0.01", "--seed", "3",
        "--max-epochs", "8", "--patience", "8", "--out", str(out),
    ]) == EXIT_OK
    record = json.loads(out.read_text().splitlines()[0])
    _validate("ordsoft.run_record-v1", record)
    assert record["strategy"] == "triangular"
    assert record["config"]["params"]["alpha"] == 0.05


def test_evaluate_reports_metrics(tmp_path, capsys):
    pred = tmp_path / "preds.csv"
    pred.write_text("true,pred\n0,0\n1,1\n1,0\n2,2\n")
    assert main(["evaluate", "--predictions", str(pred)]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    _validate("ordsoft.metric_report-v1", report)
    assert report["mae"] == pytest.approx(0.25)


def test_evaluate_missing_file_is_runtime_error(tmp_path):
    assert main(["evaluate", "--predictions", str(tmp_path / "nope.csv")]) == EXIT_RUNTIME


# --------------------------------------------------------------------- sweep


def _write_sweep_config(tmp_path, dataset, strategies, n_seeds=2, extra=None):
    config = {
        "task": "toy",
        "dataset": str(dataset),
        "strategies": strategies,
        "n_seeds": n_seeds,
        "output_dir": str(tmp_path / "out"),
        "search_space": {"max_configs": 2},
        "settings": {"max_epochs": 5, "patience": 5, "hidden_width": 4},
    }
    config.update(extra or {})
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(config))
    return path, Path(config["output_dir"])


def test_sweep_end_to_end(tmp_path, capsys):
    data = tmp_path / "data.csv"
    main(["synth", "--classes", "3", "--per-class", "20", "--flip-prob", "0.2",
          "--seed", "0", "--out", str(data)])
    config, out_dir = _write_sweep_config(tmp_path, data, ["nominal", "binomial"])
    assert main(["sweep", "--config", str(config)]) == EXIT_OK

    records = [json.loads(line) for line in (out_dir / "results.jsonl").read_text().splitlines()]
    assert len(records) == 4  # 2 seeds x 2 strategies
    for record in records:
        _validate("ordsoft.run_record-v1", record)
    assert [(r["seed"], r["strategy"]) for r in records] == [
        (0, "nominal"), (0, "binomial"), (1, "nominal"), (1, "binomial"),
    ]

    summary = json.loads((out_dir / "summary.json").read_text())
    _validate("ordsoft.sweep_summary-v1", summary)
    # summary is exactly recomputable from the records
    assert summarise_records(records, "toy", 2) == summary
    table = capsys.readouterr().out
    assert "QWK" in table and "nominal" in table


def test_sweep_rerun_is_byte_identical(tmp_path):
    data = tmp_path / "data.csv"
    main(["synth", "--classes", "3", "--per-class", "16", "--flip-prob", "0.2",
          "--seed", "1", "--out", str(data)])
    config, out_dir = _write_sweep_config(tmp_path, data, ["nominal"], n_seeds=2)
    assert main(["sweep", "--config", str(config)]) == EXIT_OK
    first = (out_dir / "results.jsonl").read_bytes()
    first_summary = (out_dir / "summary.json").read_bytes()
    assert main(["sweep", "--config", str(config)]) == EXIT_OK
    assert (out_dir / "results.jsonl").read_bytes() == first
    assert (out_dir / "summary.json").read_bytes() == first_summary


def test_sweep_worker_pool_matches_serial(tmp_path):
    data = tmp_path / "data.csv"
    main(["synth", "--classes", "3", "--per-class", "16", "--flip-prob", "0.2",
          "--seed", "1", "--out", str(data)])
    config, out_dir = _write_sweep_config(tmp_path, data, ["nominal", "binomial"], n_seeds=2)
    assert main(["sweep", "--config", str(config)]) == EXIT_OK
    serial = (out_dir / "results.jsonl").read_bytes()
    os.environ["ORDSOFT_WORKERS"] = "2"
    try:
        assert main(["sweep", "--config", str(config)]) == EXIT_OK
    finally:
        del os.environ["ORDSOFT_WORKERS"]
    assert (out_dir / "results.jsonl").read_bytes() == serial


def test_sweep_paired_writes_tables(tmp_path):
    data = tmp_path / "paired.csv"
    truth = tmp_path / "truth.csv"
    main(["synth", "--paired", "--classes-a", "3", "--classes-b", "3", "--n", "150",
          "--noise-sd", "0.4", "--seed", "5", "--out", str(data), "--truth-out", str(truth)])
    config, out_dir = _write_sweep_config(tmp_path, data, ["nominal"], n_seeds=2)
    assert main(["sweep", "--config", str(config)]) == EXIT_OK
    records = [json.loads(line) for line in (out_dir / "results.jsonl").read_text().splitlines()]
    for record in records:
        _validate("ordsoft.paired_run_record-v1", record)
        table_path = out_dir / record["table_file"]
        assert table_path.exists()
    assert (out_dir / "tables" / "truth.csv").exists()


def test_sweep_bad_config_usage_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"task": "x"}))
    assert main(["sweep", "--config", str(path)]) == EXIT_USAGE
    path.write_text(json.dumps({
        "task": "x", "dataset": "d.csv", "strategies": ["nope"],
        "n_seeds": 1, "output_dir": str(tmp_path),
    }))
    assert main(["sweep", "--config", str(path)]) == EXIT_USAGE


# ------------------------------------------------------------------- analyze


def _write_table(path, counts, row_axis="A", col_axis="B"):
    from ordsoft.jointanalysis import ContingencyTable

    ContingencyTable(np.asarray(counts), row_axis=row_axis, col_axis=col_axis).to_csv(str(path))


def test_analyze_perfect_predictions(tmp_path, capsys):
    truth = tmp_path / "truth.csv"
    counts = [[30, 5], [5, 30]]
    _write_table(truth, counts)
    for strategy in ("beta", "nominal"):
        for seed in range(5):
            _write_table(tmp_path / f"{strategy}_seed{seed}.csv", counts)
    assert main(["analyze", "--truth", str(truth), "--pred", str(tmp_path / "*_seed*.csv")]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    _validate("ordsoft.analysis_report-v1", report)
    for strategy in ("beta", "nominal"):
        runs = report["strategies"][strategy]["runs"]
        assert len(runs) == 5
        assert all(abs(r["kld"]) < 1e-9 for r in runs)
        assert all(r["table_mae"] == 0 for r in runs)
        residual = np.asarray(report["strategies"][strategy]["residual_of_mean"])
        np.testing.assert_allclose(residual, 0.0, atol=1e-12)
    assert report["pairwise"][0]["degenerate"] is True


def test_analyze_separated_strategies(tmp_path, capsys):
    rng = np.random.default_rng(8)
    truth = tmp_path / "truth.csv"
    _write_table(truth, [[40, 10], [10, 40]])
    # "good" tables close to truth, "bad" ones far from it
    for seed in range(20):
        near = np.array([[40, 10], [10, 40]]) + rng.integers(0, 3, size=(2, 2))
        far = np.array([[10, 40], [40, 10]]) + rng.integers(0, 3, size=(2, 2))
        _write_table(tmp_path / f"good_seed{seed}.csv", near)
        _write_table(tmp_path / f"bad_seed{seed}.csv", far)
    assert main(["analyze", "--truth", str(truth), "--pred", str(tmp_path / "*_seed*.csv")]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["strategies"]["good"]["kld_mean"] < report["strategies"]["bad"]["kld_mean"]
    assert report["kruskal_wallis"]["p_value"] < 0.01
    pair = report["pairwise"][0]
    assert pair["method"] == "wilcoxon_exact"
    assert pair["p_value"] == pytest.approx(2 / 2**20, abs=1e-12)


def test_analyze_requires_two_strategies(tmp_path):
    truth = tmp_path / "truth.csv"
    _write_table(truth, [[5, 5], [5, 5]])
    _write_table(tmp_path / "only_seed0.csv", [[5, 5], [5, 5]])
    assert main(["analyze", "--truth", str(truth),
                 "--pred", str(tmp_path / "only_seed*.csv")]) == EXIT_RUNTIME


def test_analyze_shape_mismatch_is_runtime_error(tmp_path):
    truth = tmp_path / "truth.csv"
    _write_table(truth, [[5, 5], [5, 5]])
    _write_table(tmp_path / "a_seed0.csv", [[5, 5, 1], [5, 5, 1]])
    _write_table(tmp_path / "b_seed0.csv", [[5, 5], [5, 5]])
    assert main(["analyze", "--truth", str(truth),
                 "--pred", str(tmp_path / "*_seed0.csv")]) == EXIT_RUNTIME


def test_analyze_bad_glob_usage_error(tmp_path):
    truth = tmp_path / "truth.csv"
    _write_table(truth, [[5, 5], [5, 5]])
    assert main(["analyze", "--truth", str(truth),
                 "--pred", str(tmp_path / "missing*.csv")]) == EXIT_USAGE
