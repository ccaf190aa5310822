"""Command-line front end.

Subcommands: ``softlabels`` (inspect a target matrix), ``synth`` (write
synthetic datasets), ``train`` (one configured run), ``sweep`` (full
multi-seed protocol from a JSON experiment config), ``evaluate`` (metric
report from a predictions CSV) and ``analyze`` (KLD / residual / test
pipeline over contingency tables).

Exit codes: 0 success, 1 usage error, 2 runtime failure. Per-run records are
JSON lines with sorted keys; all randomness derives from the seeds in the
config, so re-running a command reproduces its output files byte for byte.
The ``ORDSOFT_WORKERS`` environment variable bounds the sweep worker pool.
"""

from __future__ import annotations

import argparse
import csv
import glob as globmod
import json
import math
import os
import re
import sys
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .core import LabelSpace, SampleSet, confusion_from_labels
from .jointanalysis import (
    ContingencyTable,
    JointDistribution,
    kld,
    kruskal_wallis,
    normalise,
    pairwise_wilcoxon_holm,
    residuals,
    table_mae,
    DEFAULT_KLD_EPSILON,
)
from .metrics import METRIC_NAMES, compute_report
from .softlabel import STRATEGIES, SmoothingParams, build_target_matrix
from .synth import (
    PairedGrades,
    PairedSynthSpec,
    SynthSpec,
    flip_adjacent,
    generate,
    generate_paired,
    paired_features,
)
from .trainer import (
    ProtocolSettings,
    SearchSpace,
    TrainConfig,
    _train_final,
    run_paired_single,
    run_single,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
WORKERS_ENV = "ORDSOFT_WORKERS"

_STREAM_PAIR_FLIP_A = 21
_STREAM_PAIR_FLIP_B = 22


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1 here
        raise UsageError(message)


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None) -> None:
    if out:
        _atomic_write(Path(out), text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- softlabels


def cmd_softlabels(args) -> int:
    try:
        params = SmoothingParams(
            eta=args.eta, alpha=args.alpha, p=args.p, concentration=args.concentration
        )
        matrix = build_target_matrix(LabelSpace(args.classes), args.strategy, params)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    lines = []
    if args.plot_data:
        lines.append("strategy,true_grade,grade,mass")
        for k in range(matrix.n_classes):
            for j in range(matrix.n_classes):
                lines.append(f"{matrix.strategy},{k},{j},{repr(float(matrix.rows[k, j]))}")
    else:
        for k in range(matrix.n_classes):
            lines.append(",".join(repr(float(v)) for v in matrix.rows[k]))
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


# --------------------------------------------------------------------- synth


def _write_paired_csv(path: str, features: np.ndarray, labels_a: np.ndarray, labels_b: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(features.shape[1])] + ["label_a", "label_b"])
        for row, la, lb in zip(features, labels_a, labels_b):
            writer.writerow([repr(float(v)) for v in row] + [int(la), int(lb)])


def _read_paired_csv(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-2:] != ["label_a", "label_b"]:
            raise ValueError(f"{path}: expected trailing columns label_a,label_b")
        d = len(header) - 2
        feats, la, lb = [], [], []
        for row in reader:
            if not row:
                continue
            feats.append([float(v) for v in row[:d]])
            la.append(int(row[d]))
            lb.append(int(row[d + 1]))
    return np.asarray(feats, dtype=float), np.asarray(la, dtype=int), np.asarray(lb, dtype=int)


def cmd_synth(args) -> int:
    if args.paired:
        try:
            spec = PairedSynthSpec(
                n_classes_a=args.classes_a,
                n_classes_b=args.classes_b,
                n_samples=args.n,
                low_grade_concentration=args.low_grade_concentration,
                high_grade_spread=args.high_grade_spread,
                seed=args.seed,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        grades = generate_paired(spec)
        labels_a, labels_b = grades.labels_a, grades.labels_b
        if args.flip_prob > 0:
            labels_a = flip_adjacent(
                labels_a, spec.n_classes_a, args.flip_prob,
                np.random.default_rng([args.seed, _STREAM_PAIR_FLIP_A]),
            )
            labels_b = flip_adjacent(
                labels_b, spec.n_classes_b, args.flip_prob,
                np.random.default_rng([args.seed, _STREAM_PAIR_FLIP_B]),
            )
        observed = PairedGrades(labels_a, labels_b, spec.n_classes_a, spec.n_classes_b)
        features = paired_features(
            observed, args.dim, args.separation, args.noise_sd, seed=args.seed
        )
        _write_paired_csv(args.out, features, labels_a, labels_b)
        if args.truth_out:
            observed.contingency().to_csv(args.truth_out)
        return EXIT_OK
    try:
        spec = SynthSpec(
            n_classes=args.classes,
            n_per_class=args.per_class,
            n_features=args.dim,
            class_separation=args.separation,
            noise_sd=args.noise_sd,
            adjacent_flip_prob=args.flip_prob,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    generate(spec).to_csv(args.out)
    return EXIT_OK


# --------------------------------------------------------------------- train


def _run_record(task: str, result) -> dict:
    return {
        "schema": "ordsoft.run_record-v1",
        "task": task,
        "seed": result.seed,
        "strategy": result.strategy,
        "config": result.chosen_config.to_dict(),
        "validation_amae": result.validation_amae,
        "metrics": result.metrics.to_dict(),
        "true_labels": [int(v) for v in result.predictions.true_labels],
        "predicted_labels": [int(v) for v in result.predictions.predicted_labels],
    }


def cmd_train(args) -> int:
    from .core import PredictionSet, RunResult, build_confusion
    from .trainer import stratified_split

    dataset = SampleSet.from_csv(args.data)
    space = LabelSpace(args.classes or int(dataset.labels.max()) + 1)
    cfg = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
    params = SmoothingParams(
        eta=args.eta if args.eta is not None else cfg.get("params", {}).get("eta", 1.0),
        alpha=args.alpha if args.alpha is not None else cfg.get("params", {}).get("alpha"),
        p=args.p if args.p is not None else cfg.get("params", {}).get("p"),
        concentration=(
            args.concentration
            if args.concentration is not None
            else cfg.get("params", {}).get("concentration")
        ),
    )
    try:
        config = TrainConfig(
            learning_rate=args.learning_rate or cfg.get("learning_rate", 1e-3),
            strategy=args.strategy or cfg.get("strategy", "nominal"),
            params=params,
            seed=args.seed if args.seed is not None else cfg.get("seed", 0),
            batch_size=args.batch_size or cfg.get("batch_size", 32),
            max_epochs=args.max_epochs or cfg.get("max_epochs", 100),
            patience=args.patience or cfg.get("patience", 40),
            optimizer=args.optimizer or cfg.get("optimizer", "adam"),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    settings = ProtocolSettings(
        batch_size=config.batch_size,
        max_epochs=config.max_epochs,
        patience=config.patience,
        optimizer=config.optimizer,
    )
    train_idx, test_idx = stratified_split(dataset.labels, settings.train_fraction, config.seed)
    train_set, test_set = dataset.subset(train_idx), dataset.subset(test_idx)
    model = _train_final(train_set, config, space, settings)
    preds = PredictionSet.from_probs(test_set.labels, model.predict_proba(test_set.features))
    metrics = compute_report(build_confusion(preds, space))
    result = RunResult(config.seed, config.strategy, config, metrics, preds)
    line = _dump_json(_run_record(args.task, result))
    if args.out:
        with open(args.out, "a") as fh:
            fh.write(line + "\n")
    else:
        sys.stdout.write(line + "\n")
    return EXIT_OK


# --------------------------------------------------------------------- sweep


def summarise_records(records: list[dict], task: str, n_seeds: int) -> dict:
    """Mean/std per strategy and metric, in the paper's Mean_STD display form.

    Exactly recomputable from the JSON-lines records: uses only their
    ``strategy`` and ``metrics`` fields. Std is the sample standard deviation
    (ddof=1), 0 for a single seed.
    """
    by_strategy: dict[str, dict[str, list[float]]] = {}
    for rec in records:
        bucket = by_strategy.setdefault(rec["strategy"], {m: [] for m in METRIC_NAMES})
        metrics = rec.get("metrics") or rec.get("metrics_a")
        for m in METRIC_NAMES:
            bucket[m].append(metrics[m])

    def cell(values: list[float]) -> dict:
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        return {"mean": mean, "std": std, "display": f"{mean:.3f}_{{{std:.3f}}}"}

    strategies = {
        name: {m: cell(vals[m]) for m in METRIC_NAMES} for name, vals in by_strategy.items()
    }
    average = {}
    for m in METRIC_NAMES:
        means = [strategies[s][m]["mean"] for s in strategies]
        stds = [strategies[s][m]["std"] for s in strategies]
        avg_mean, avg_std = float(np.mean(means)), float(np.mean(stds))
        average[m] = {
            "mean": avg_mean,
            "std": avg_std,
            "display": f"{avg_mean:.3f}_{{{avg_std:.3f}}}",
        }
    return {
        "schema": "ordsoft.sweep_summary-v1",
        "task": task,
        "n_seeds": n_seeds,
        "strategies": strategies,
        "average": average,
    }


def render_summary(summary: dict) -> str:
    names = list(summary["strategies"]) + ["Average"]
    rows = [["strategy"] + [m.upper() for m in METRIC_NAMES]]
    for name in names:
        cells = summary["average"] if name == "Average" else summary["strategies"][name]
        rows.append([name] + [cells[m]["display"] for m in METRIC_NAMES])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def _single_task(payload) -> dict:
    dataset, space, strategy, seed, search_space, settings, task = payload
    result = run_single(dataset, space, strategy, seed, search_space, settings)
    return _run_record(task, result)


def _paired_task(payload) -> dict:
    features, grades, strategy, seed, search_space, settings, task = payload
    result = run_paired_single(features, grades, strategy, seed, search_space, settings)
    return {
        "schema": "ordsoft.paired_run_record-v1",
        "task": task,
        "seed": result.seed,
        "strategy": result.strategy,
        "config_a": result.config_a.to_dict(),
        "config_b": result.config_b.to_dict(),
        "metrics_a": result.metrics_a.to_dict(),
        "metrics_b": result.metrics_b.to_dict(),
        "table": [[int(v) for v in row] for row in result.table.counts],
        "table_file": f"tables/{result.strategy}_seed{result.seed}.csv",
    }


def _map_tasks(fn, payloads):
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, payloads))
    return [fn(p) for p in payloads]


def cmd_sweep(args) -> int:
    try:
        config = json.loads(Path(args.config).read_text())
        task = config["task"]
        dataset_path = config["dataset"]
        strategies = config["strategies"]
        n_seeds = int(config["n_seeds"])
        output_dir = Path(args.out_dir or config["output_dir"])
        search_space = SearchSpace.from_dict(config.get("search_space", {}))
        settings = ProtocolSettings(**config.get("settings", {}))
        if n_seeds < 1 or not strategies:
            raise ValueError("n_seeds must be >= 1 and strategies non-empty")
        unknown = [s for s in strategies if s not in STRATEGIES]
        if unknown:
            raise ValueError(f"unknown strategies {unknown}")
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise UsageError(f"bad sweep config: {exc}") from exc

    with open(dataset_path, newline="") as fh:
        header = next(csv.reader(fh))
    paired = header[-2:] == ["label_a", "label_b"]

    seeds = [settings.root_seed + i for i in range(n_seeds)]
    if paired:
        features, labels_a, labels_b = _read_paired_csv(dataset_path)
        grades = PairedGrades(
            labels_a, labels_b, int(labels_a.max()) + 1, int(labels_b.max()) + 1
        )
        payloads = [
            (features, grades, strategy, seed, search_space, settings, task)
            for seed in seeds
            for strategy in strategies
        ]
        records = _map_tasks(_paired_task, payloads)
        (output_dir / "tables").mkdir(parents=True, exist_ok=True)
        grades.contingency().to_csv(str(output_dir / "tables" / "truth.csv"))
        for rec in records:
            counts = np.asarray(rec["table"], dtype=int)
            ContingencyTable(counts).to_csv(str(output_dir / rec["table_file"]))
    else:
        dataset = SampleSet.from_csv(dataset_path)
        space = LabelSpace(int(dataset.labels.max()) + 1)
        payloads = [
            (dataset, space, strategy, seed, search_space, settings, task)
            for seed in seeds
            for strategy in strategies
        ]
        records = _map_tasks(_single_task, payloads)

    output_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(
        output_dir / "results.jsonl", "".join(_dump_json(r) + "\n" for r in records)
    )
    summary = summarise_records(records, task, n_seeds)
    _atomic_write(output_dir / "summary.json", _dump_json(summary) + "\n")
    _atomic_write(output_dir / "summary.txt", render_summary(summary))
    sys.stdout.write(render_summary(summary))
    return EXIT_OK


# ------------------------------------------------------------------ evaluate


def cmd_evaluate(args) -> int:
    with open(args.predictions, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["true", "pred"]:
            raise UsageError(f"{args.predictions}: expected header true,pred")
        pairs = [(int(r[0]), int(r[1])) for r in reader if r]
    true_labels = np.asarray([p[0] for p in pairs], dtype=int)
    pred_labels = np.asarray([p[1] for p in pairs], dtype=int)
    n_classes = args.classes or int(max(true_labels.max(), pred_labels.max())) + 1
    confusion = confusion_from_labels(true_labels, pred_labels, LabelSpace(n_classes))
    _emit(_dump_json(compute_report(confusion).to_dict()) + "\n", args.out)
    return EXIT_OK


# ------------------------------------------------------------------- analyze


_TABLE_NAME = re.compile(r"^(?P<strategy>.+)_seed(?P<seed>\d+)$")


def analyse_tables(
    truth: ContingencyTable,
    predicted: dict[str, list[tuple[int, ContingencyTable]]],
    epsilon: float = DEFAULT_KLD_EPSILON,
) -> dict:
    """KLD/MAE per run, residuals of mean predicted tables, and the test pipeline."""
    p = normalise(truth)
    strategies_report = {}
    kld_by_strategy: dict[str, list[float]] = {}
    seeds_by_strategy: dict[str, list[int]] = {}
    for strategy, runs in sorted(predicted.items()):
        runs = sorted(runs, key=lambda sr: sr[0])
        entries = []
        dists = []
        for seed, table in runs:
            if table.shape != truth.shape:
                raise ValueError(
                    f"table shape {table.shape} for {strategy} seed {seed} "
                    f"does not match truth {truth.shape}"
                )
            q = normalise(table)
            dists.append(q.probs)
            entries.append(
                {"seed": seed, "kld": kld(p, q, epsilon), "table_mae": table_mae(p, q)}
            )
        mean_q = JointDistribution(np.mean(dists, axis=0))
        klds = [e["kld"] for e in entries]
        maes = [e["table_mae"] for e in entries]
        strategies_report[strategy] = {
            "runs": entries,
            "kld_mean": float(np.mean(klds)),
            "kld_std": float(np.std(klds, ddof=1)) if len(klds) > 1 else 0.0,
            "table_mae_mean": float(np.mean(maes)),
            "table_mae_std": float(np.std(maes, ddof=1)) if len(maes) > 1 else 0.0,
            "residual_of_mean": residuals(p, mean_q).residuals.tolist(),
        }
        kld_by_strategy[strategy] = klds
        seeds_by_strategy[strategy] = [e["seed"] for e in entries]

    report = {
        "schema": "ordsoft.analysis_report-v1",
        "epsilon": epsilon,
        "truth_total": truth.total,
        "strategies": strategies_report,
        "kruskal_wallis": None,
        "pairwise": [],
    }
    if len(kld_by_strategy) < 2:
        raise ValueError("need at least 2 strategies for the global test")
    kw = kruskal_wallis(list(kld_by_strategy.values()))
    report["kruskal_wallis"] = kw.to_dict()
    seed_sets = {tuple(v) for v in seeds_by_strategy.values()}
    if len(seed_sets) != 1:
        raise ValueError("strategies have mismatched seed sets; cannot pair runs")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # degenerate pairs are flagged in the result
        pairwise = pairwise_wilcoxon_holm(kld_by_strategy)
    report["pairwise"] = [
        {
            "pair": list(entry["pair"]),
            "statistic": entry["test"].statistic,
            "p_value": entry["test"].p_value,
            "method": entry["test"].method,
            "degenerate": entry["test"].degenerate,
            "p_holm": entry["p_holm"],
        }
        for entry in pairwise
    ]
    return report


def cmd_analyze(args) -> int:
    truth = ContingencyTable.from_csv(args.truth)
    files = sorted(globmod.glob(args.pred))
    if not files:
        raise UsageError(f"no predicted tables match {args.pred!r}")
    predicted: dict[str, list[tuple[int, ContingencyTable]]] = {}
    for path in files:
        stem = Path(path).stem
        match = _TABLE_NAME.match(stem)
        if not match:
            raise UsageError(
                f"{path}: predicted tables must be named <strategy>_seed<N>.csv"
            )
        predicted.setdefault(match["strategy"], []).append(
            (int(match["seed"]), ContingencyTable.from_csv(path))
        )
    report = analyse_tables(truth, predicted, epsilon=args.epsilon)
    _emit(_dump_json(report) + "\n", args.out)
    return EXIT_OK


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ordsoft", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("softlabels", help="print a soft-target matrix as CSV")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--alpha", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--concentration", type=float)
    p.add_argument("--plot-data", action="store_true", help="long-format per-row mass table")
    p.add_argument("--out")
    p.set_defaults(func=cmd_softlabels)

    p = sub.add_parser("synth", help="write a synthetic dataset CSV")
    p.add_argument("--paired", action="store_true", help="paired two-scale dataset")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-class", type=int, default=60)
    p.add_argument("--classes-a", type=int, default=5)
    p.add_argument("--classes-b", type=int, default=4)
    p.add_argument("--n", type=int, default=968)
    p.add_argument("--low-grade-concentration", type=float, default=0.85)
    p.add_argument("--high-grade-spread", type=float, default=0.9)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--noise-sd", type=float, default=0.5)
    p.add_argument("--flip-prob", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", help="paired mode: ground-truth contingency table CSV")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run one configured training run")
    p.add_argument("--data", required=True)
    p.add_argument("--task", default="adhoc")
    p.add_argument("--classes", type=int)
    p.add_argument("--config", help="TrainConfig JSON; flags override")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--concentration", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--out", help="JSON-lines file to append the run record to")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run the multi-seed protocol from an experiment config")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out-dir", help="override the config output_dir")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="metric report from a true,pred CSV")
    p.add_argument("--predictions", required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="joint-table KLD/residual/statistics report")
    p.add_argument("--truth", required=True, help="ground-truth contingency CSV")
    p.add_argument("--pred", required=True, help="glob of <strategy>_seed<N>.csv tables")
    p.add_argument("--epsilon", type=float, default=DEFAULT_KLD_EPSILON)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
