"""Desk-scale classifier training under soft-target supervision.

A small numpy network (linear or one-hidden-layer tanh MLP) stands in for the
image backbone: the supervision strategies under study act purely at the
label level, so the comparison logic is architecture-agnostic. Training is
plain mini-batch gradient descent on the soft cross-entropy, with early
stopping on validation loss (weights restored from the best epoch) and full
determinism: every random draw comes from child generators of the run seed.

``random_search`` samples hyperparameter configurations without replacement
from the per-strategy grid and selects by validation AMAE; ``run_protocol``
repeats split / search / retrain / evaluate over independent seeds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import LabelSpace, PredictionSet, RunResult, SampleSet, build_confusion
from .jointanalysis import ContingencyTable
from .loss import mean_soft_ce, softmax
from .metrics import MetricReport, amae as amae_metric, mae as mae_metric, compute_report
from .softlabel import SmoothingParams, SoftTargetMatrix, build_target_matrix
from .synth import PairedGrades

_STREAM_SPLIT = 11
_STREAM_INIT = 12
_STREAM_SHUFFLE = 13
_STREAM_SEARCH = 14


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    strategy: str
    params: SmoothingParams
    seed: int
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 40
    optimizer: str = "adam"  # "adam" | "sgd"

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 1 <= self.patience <= self.max_epochs:
            raise ValueError("patience must lie in [1, max_epochs]")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "strategy": self.strategy,
            "params": self.params.to_dict(),
            "seed": self.seed,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "optimizer": self.optimizer,
        }


@dataclass
class ClassifierModel:
    """Linear or one-hidden-layer tanh classifier with J outputs."""

    architecture: str  # "linear" | "mlp_1_hidden"
    weights: dict
    n_classes: int
    hidden_width: int = 0

    def logits(self, features: np.ndarray) -> np.ndarray:
        w = self.weights
        if self.architecture == "linear":
            return features @ w["w_out"] + w["b_out"]
        hidden = np.maximum(features @ w["w_in"] + w["b_in"], 0.0)
        return hidden @ w["w_out"] + w["b_out"]

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return softmax(self.logits(features))

    def copy_weights(self) -> dict:
        return {k: v.copy() for k, v in self.weights.items()}


def init_model(
    architecture: str, n_features: int, n_classes: int, seed: int, hidden_width: int = 32
) -> ClassifierModel:
    """Fan-in-scaled symmetric uniform initialisation, all layers seeded."""
    rng = np.random.default_rng([seed, _STREAM_INIT])

    def layer(fan_in: int, fan_out: int) -> np.ndarray:
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    if architecture == "linear":
        weights = {"w_out": layer(n_features, n_classes), "b_out": np.zeros(n_classes)}
        return ClassifierModel(architecture, weights, n_classes)
    if architecture == "mlp_1_hidden":
        weights = {
            "w_in": layer(n_features, hidden_width),
            "b_in": np.zeros(hidden_width),
            "w_out": layer(hidden_width, n_classes),
            "b_out": np.zeros(n_classes),
        }
        return ClassifierModel(architecture, weights, n_classes, hidden_width)
    raise ValueError(f"unknown architecture {architecture!r}")


def stratified_split(
    labels: Sequence[int], train_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic stratified partition into train and holdout indices.

    Per-class train counts are the class quotas N_j * fraction rounded down,
    then topped up largest-remainder-first until the global total matches
    round(N * fraction); remainder ties go to the larger class (smallest
    proportional perturbation), then to the lower grade.
    """
    labels = np.asarray(labels, dtype=int)
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    classes, class_counts = np.unique(labels, return_counts=True)
    if (class_counts < 2).any():
        small = classes[class_counts < 2].tolist()
        raise ValueError(f"classes {small} have fewer than 2 samples and cannot be split")
    total_train = int(math.floor(labels.size * train_fraction + 0.5))
    quotas = class_counts * train_fraction
    train_counts = np.floor(quotas).astype(int)
    remainders = quotas - train_counts
    order = sorted(
        range(len(classes)),
        key=lambda i: (-remainders[i], -class_counts[i], classes[i]),
    )
    for i in order[: total_train - int(train_counts.sum())]:
        train_counts[i] += 1

    rng = np.random.default_rng([seed, _STREAM_SPLIT])
    train_parts, holdout_parts = [], []
    for cls, n_train in zip(classes, train_counts):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(members.size)]
        train_parts.append(members[:n_train])
        holdout_parts.append(members[n_train:])
    train_idx = np.sort(np.concatenate(train_parts))
    holdout_idx = np.sort(np.concatenate(holdout_parts))
    return train_idx, holdout_idx


@dataclass(frozen=True)
class TrainHistory:
    train_loss: tuple
    val_loss: tuple
    best_epoch: int  # 1-based epoch whose weights were kept
    stopped_epoch: int


def _batch_gradients(model: ClassifierModel, x: np.ndarray, t: np.ndarray) -> tuple[dict, float]:
    """Gradients of the mean soft cross-entropy of one batch."""
    w = model.weights
    if model.architecture == "linear":
        logits = x @ w["w_out"] + w["b_out"]
        probs = softmax(logits)
        d_logits = (probs - t) / x.shape[0]
        grads = {"w_out": x.T @ d_logits, "b_out": d_logits.sum(axis=0)}
    else:
        z_in = x @ w["w_in"] + w["b_in"]
        hidden = np.maximum(z_in, 0.0)
        logits = hidden @ w["w_out"] + w["b_out"]
        probs = softmax(logits)
        d_logits = (probs - t) / x.shape[0]
        d_hidden = (d_logits @ w["w_out"].T) * (z_in > 0.0)
        grads = {
            "w_out": hidden.T @ d_logits,
            "b_out": d_logits.sum(axis=0),
            "w_in": x.T @ d_hidden,
            "b_in": d_hidden.sum(axis=0),
        }
    batch_loss = -(t * np.log(np.maximum(probs, 1e-12))).sum() / x.shape[0]
    return grads, float(batch_loss)


class _Optimizer:
    """Plain SGD or Adam (bias-corrected moments, betas 0.9/0.999, eps 1e-8)."""

    def __init__(self, kind: str, lr: float, weights: dict):
        self.kind = kind
        self.lr = lr
        self.steps = 0
        if kind == "adam":
            self.m = {k: np.zeros_like(v) for k, v in weights.items()}
            self.v = {k: np.zeros_like(v) for k, v in weights.items()}

    def update(self, weights: dict, grads: dict) -> None:
        if self.kind == "sgd":
            for key, grad in grads.items():
                weights[key] -= self.lr * grad
            return
        self.steps += 1
        correction_m = 1.0 - 0.9**self.steps
        correction_v = 1.0 - 0.999**self.steps
        for key, grad in grads.items():
            self.m[key] = 0.9 * self.m[key] + 0.1 * grad
            self.v[key] = 0.999 * self.v[key] + 0.001 * grad**2
            m_hat = self.m[key] / correction_m
            v_hat = self.v[key] / correction_v
            weights[key] -= self.lr * m_hat / (np.sqrt(v_hat) + 1e-8)


def train(
    model: ClassifierModel,
    data: SampleSet,
    targets: SoftTargetMatrix,
    config: TrainConfig,
    validation: SampleSet,
) -> tuple[ClassifierModel, TrainHistory]:
    """Mini-batch gradient descent with early stopping on validation loss.

    Stops after ``patience`` consecutive epochs without strict validation-loss
    improvement (or at max_epochs) and restores the best epoch's weights.
    """
    if data.n_samples == 0 or validation.n_samples == 0:
        raise ValueError("training and validation sets must be non-empty")
    train_targets = targets.for_labels(data.labels)
    val_targets = targets.for_labels(validation.labels)
    rng = np.random.default_rng([config.seed, _STREAM_SHUFFLE])
    optimizer = _Optimizer(config.optimizer, config.learning_rate, model.weights)

    best_val = math.inf
    best_weights = model.copy_weights()
    best_epoch = 0
    epochs_without_improvement = 0
    train_losses: list[float] = []
    val_losses: list[float] = []

    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(data.n_samples)
        batch_losses = []
        # divergence surfaces as non-finite losses below, not as numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, data.n_samples, config.batch_size):
                batch = perm[start : start + config.batch_size]
                grads, batch_loss = _batch_gradients(
                    model, data.features[batch], train_targets[batch]
                )
                optimizer.update(model.weights, grads)
                batch_losses.append(batch_loss)
            epoch_train = float(np.mean(batch_losses))
            epoch_val = mean_soft_ce(model.predict_proba(validation.features), val_targets)
        if not (math.isfinite(epoch_train) and math.isfinite(epoch_val)):
            raise TrainingDiverged(
                f"non-finite loss at epoch {epoch} (train={epoch_train}, val={epoch_val}) "
                f"with lr={config.learning_rate}, strategy={config.strategy}"
            )
        train_losses.append(epoch_train)
        val_losses.append(epoch_val)
        if epoch_val < best_val:
            best_val = epoch_val
            best_weights = model.copy_weights()
            best_epoch = epoch
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
        if epochs_without_improvement >= config.patience:
            break

    model.weights = best_weights
    return model, TrainHistory(tuple(train_losses), tuple(val_losses), best_epoch, len(val_losses))


@dataclass(frozen=True)
class SearchSpace:
    """Per-strategy hyperparameter grids; the search samples at most max_configs."""

    learning_rates: tuple = (1e-4, 1e-3, 1e-2)
    etas: tuple = (0.8, 1.0)
    alphas: tuple = (0.01, 0.05, 0.10)
    ps: tuple = (1.0, 1.5, 2.0)
    concentrations: tuple = (5.0, 10.0)
    max_configs: int = 15

    def __post_init__(self) -> None:
        if self.max_configs < 1:
            raise ValueError("max_configs must be >= 1")

    def grid(self, strategy: str) -> list[tuple[float, SmoothingParams]]:
        lrs = self.learning_rates
        if strategy == "nominal":
            return [(lr, SmoothingParams()) for lr in lrs]
        if strategy == "nominal_smoothed":
            return [(lr, SmoothingParams(eta=e)) for lr, e in itertools.product(lrs, self.etas)]
        if strategy == "binomial":
            return [(lr, SmoothingParams(eta=e)) for lr, e in itertools.product(lrs, self.etas)]
        if strategy == "beta":
            return [
                (lr, SmoothingParams(eta=e, concentration=c))
                for lr, e, c in itertools.product(lrs, self.etas, self.concentrations)
            ]
        if strategy == "triangular":
            return [
                (lr, SmoothingParams(eta=e, alpha=a))
                for lr, e, a in itertools.product(lrs, self.etas, self.alphas)
            ]
        if strategy == "exponential":
            return [
                (lr, SmoothingParams(eta=e, p=p))
                for lr, e, p in itertools.product(lrs, self.etas, self.ps)
            ]
        raise ValueError(f"unknown strategy {strategy!r}")

    def to_dict(self) -> dict:
        return {
            "learning_rates": list(self.learning_rates),
            "etas": list(self.etas),
            "alphas": list(self.alphas),
            "ps": list(self.ps),
            "concentrations": list(self.concentrations),
            "max_configs": self.max_configs,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SearchSpace":
        known = {f: tuple(v) if isinstance(v, (list, tuple)) else v for f, v in data.items()}
        return cls(**known)


@dataclass(frozen=True)
class ProtocolSettings:
    train_fraction: float = 0.7
    val_fraction: float = 0.3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 40
    architecture: str = "mlp_1_hidden"
    hidden_width: int = 32
    optimizer: str = "adam"
    root_seed: int = 0


@dataclass(frozen=True)
class SearchOutcome:
    config: TrainConfig
    val_amae: float
    val_mae: float
    n_evaluated: int


def _fit_and_score(
    space_labels: LabelSpace,
    subtrain: SampleSet,
    val: SampleSet,
    config: TrainConfig,
    settings: ProtocolSettings,
) -> tuple[Optional[ClassifierModel], float, float]:
    """Train one candidate; a diverged run scores worst instead of aborting the search."""
    targets = build_target_matrix(space_labels, config.strategy, config.params)
    model = init_model(
        settings.architecture,
        subtrain.n_features,
        space_labels.n_classes,
        config.seed,
        settings.hidden_width,
    )
    try:
        model, _ = train(model, subtrain, targets, config, val)
    except TrainingDiverged:
        return None, math.inf, math.inf
    preds = PredictionSet.from_probs(val.labels, model.predict_proba(val.features))
    confusion = build_confusion(preds, space_labels)
    return model, amae_metric(confusion), mae_metric(confusion)


def random_search(
    space: SearchSpace,
    data: SampleSet,
    strategy: str,
    seed: int,
    label_space: LabelSpace,
    settings: ProtocolSettings = ProtocolSettings(),
) -> SearchOutcome:
    """Sample configurations without replacement and pick the lowest validation AMAE.

    The validation set is carved from ``data`` (the training split) at
    ``settings.val_fraction``; ties break by validation MAE, then lower
    learning rate, then grid position.
    """
    grid = space.grid(strategy)
    rng = np.random.default_rng([seed, _STREAM_SEARCH])
    n_sample = min(space.max_configs, len(grid))
    chosen = rng.choice(len(grid), size=n_sample, replace=False)

    sub_idx, val_idx = stratified_split(data.labels, 1.0 - settings.val_fraction, seed)
    subtrain, val = data.subset(sub_idx), data.subset(val_idx)

    best_key = None
    best: Optional[SearchOutcome] = None
    for grid_pos in chosen:
        lr, params = grid[int(grid_pos)]
        config = TrainConfig(
            learning_rate=lr,
            strategy=strategy,
            params=params,
            seed=seed,
            batch_size=settings.batch_size,
            max_epochs=settings.max_epochs,
            patience=settings.patience,
            optimizer=settings.optimizer,
        )
        _, val_amae, val_mae = _fit_and_score(label_space, subtrain, val, config, settings)
        key = (val_amae, val_mae, lr, int(grid_pos))
        if best_key is None or key < best_key:
            best_key = key
            best = SearchOutcome(config, val_amae, val_mae, n_sample)
    assert best is not None
    return best


def _train_final(
    data: SampleSet,
    config: TrainConfig,
    label_space: LabelSpace,
    settings: ProtocolSettings,
) -> ClassifierModel:
    """Retrain the chosen configuration on the run's subtrain/validation split."""
    sub_idx, val_idx = stratified_split(data.labels, 1.0 - settings.val_fraction, config.seed)
    subtrain, val = data.subset(sub_idx), data.subset(val_idx)
    targets = build_target_matrix(label_space, config.strategy, config.params)
    model = init_model(
        settings.architecture,
        subtrain.n_features,
        label_space.n_classes,
        config.seed,
        settings.hidden_width,
    )
    model, _ = train(model, subtrain, targets, config, val)
    return model


def run_single(
    dataset: SampleSet,
    label_space: LabelSpace,
    strategy: str,
    seed: int,
    search_space: SearchSpace,
    settings: ProtocolSettings,
) -> RunResult:
    """One (seed, strategy) run: split, search, retrain, evaluate on the holdout."""
    train_idx, test_idx = stratified_split(dataset.labels, settings.train_fraction, seed)
    train_set, test_set = dataset.subset(train_idx), dataset.subset(test_idx)
    outcome = random_search(search_space, train_set, strategy, seed, label_space, settings)
    model = _train_final(train_set, outcome.config, label_space, settings)
    preds = PredictionSet.from_probs(test_set.labels, model.predict_proba(test_set.features))
    metrics = compute_report(build_confusion(preds, label_space))
    return RunResult(
        seed=seed,
        strategy=strategy,
        chosen_config=outcome.config,
        metrics=metrics,
        predictions=preds,
        validation_amae=outcome.val_amae,
    )


def run_protocol(
    dataset: SampleSet,
    label_space: LabelSpace,
    strategies: Sequence[str],
    n_seeds: int,
    search_space: SearchSpace = SearchSpace(),
    settings: ProtocolSettings = ProtocolSettings(),
) -> list[RunResult]:
    """Repeat run_single over seeds root_seed .. root_seed + n_seeds - 1."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    results = []
    for i in range(n_seeds):
        seed = settings.root_seed + i
        for strategy in strategies:
            results.append(run_single(dataset, label_space, strategy, seed, search_space, settings))
    return results


@dataclass(frozen=True)
class PairedRunResult:
    """One paired-task run: both models' metrics plus the predicted joint table."""

    seed: int
    strategy: str
    table: ContingencyTable
    config_a: TrainConfig
    config_b: TrainConfig
    metrics_a: MetricReport
    metrics_b: MetricReport


def run_paired_single(
    features: np.ndarray,
    grades: PairedGrades,
    strategy: str,
    seed: int,
    search_space: SearchSpace,
    settings: ProtocolSettings,
) -> PairedRunResult:
    """Train one model per grade scale on shared features; cross their predictions.

    The split stratifies on the A grades (joint cells can be too sparse to
    stratify on); the predicted contingency table pairs the two models' test
    predictions sample by sample.
    """
    space_a = LabelSpace(grades.n_classes_a)
    space_b = LabelSpace(grades.n_classes_b)
    train_idx, test_idx = stratified_split(grades.labels_a, settings.train_fraction, seed)

    tables = {}
    configs = {}
    reports = {}
    preds = {}
    for task, labels, space in (("a", grades.labels_a, space_a), ("b", grades.labels_b, space_b)):
        train_set = SampleSet(features[train_idx], labels[train_idx])
        test_set = SampleSet(features[test_idx], labels[test_idx])
        outcome = random_search(search_space, train_set, strategy, seed, space, settings)
        model = _train_final(train_set, outcome.config, space, settings)
        task_preds = PredictionSet.from_probs(test_set.labels, model.predict_proba(test_set.features))
        preds[task] = task_preds
        configs[task] = outcome.config
        reports[task] = compute_report(build_confusion(task_preds, space))

    counts = np.zeros((grades.n_classes_a, grades.n_classes_b), dtype=int)
    np.add.at(counts, (preds["a"].predicted_labels, preds["b"].predicted_labels), 1)
    tables = ContingencyTable(counts, row_axis="A", col_axis="B")
    return PairedRunResult(
        seed=seed,
        strategy=strategy,
        table=tables,
        config_a=configs["a"],
        config_b=configs["b"],
        metrics_a=reports["a"],
        metrics_b=reports["b"],
    )


def run_paired_protocol(
    features: np.ndarray,
    grades: PairedGrades,
    strategies: Sequence[str],
    n_seeds: int,
    search_space: SearchSpace = SearchSpace(),
    settings: ProtocolSettings = ProtocolSettings(),
) -> list[PairedRunResult]:
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    results = []
    for i in range(n_seeds):
        seed = settings.root_seed + i
        for strategy in strategies:
            results.append(
                run_paired_single(features, grades, strategy, seed, search_space, settings)
            )
    return results
