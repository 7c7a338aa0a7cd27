"""
Evaluation service: stratified folds, confusion metrics and MKCapsnet
cross-validation.

Positive class is SZ. Headline metrics are reported two ways: pooled over
every fold's confusion counts, and the mean of the per-fold metrics.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from typing import Callable, Optional, Sequence

from core.errors import FoldError, MKCapsError, StratificationError
from core.rng import RandomStream, stream_key
from models.matrices import ConnectivityMatrix
from models.schemas import (
    ConfusionCounts, CrossValResult, FoldPlan, FoldResult, Label, LossConfig, Metrics, ModelConfig,
    TrainConfig,
)
from services.capsnet import predict
from services.training import fit

logger = logging.getLogger(__name__)


# ── Folds ────────────────────────────────────────────────────────────────────

def stratified_kfold(labels: Sequence[Label], k: int, seed: int) -> FoldPlan:
    """Shuffle each class with its own stream, then deal indices round-robin."""
    if k < 2:
        raise StratificationError(f"need at least 2 folds, got {k}")
    folds: list[list[int]] = [[] for _ in range(k)]
    cursor = 0
    for label in Label:
        members = [i for i, lab in enumerate(labels) if lab == label]
        if len(members) < k:
            raise StratificationError(f"class {label.value} has {len(members)} samples, fewer than {k} folds")
        order = RandomStream(seed, stream_key("folds", label.value)).permutation(len(members))
        for i in order:
            folds[cursor % k].append(members[int(i)])
            cursor += 1

    folds = [sorted(fold) for fold in folds]
    counts = [{label: sum(1 for i in fold if labels[i] == label) for label in Label} for fold in folds]
    return FoldPlan(k=k, seed=seed, folds=folds, class_counts=counts)


def train_indices(plan: FoldPlan, fold: int) -> list[int]:
    return sorted(i for f, members in enumerate(plan.folds) if f != fold for i in members)


# ── Metrics ──────────────────────────────────────────────────────────────────

def _ratio(num: int, den: int) -> Optional[float]:
    return None if den == 0 else float(Fraction(num, den))


def compute_metrics(confusion: ConfusionCounts) -> Metrics:
    return Metrics(
        accuracy=_ratio(confusion.tp + confusion.tn, confusion.total),
        sensitivity=_ratio(confusion.tp, confusion.tp + confusion.fn),
        specificity=_ratio(confusion.tn, confusion.tn + confusion.fp),
    )


def mean_metrics(metrics: Sequence[Metrics]) -> Metrics:
    """Per-field mean over the folds where the metric is defined."""
    def mean(field: str) -> Optional[float]:
        values = [getattr(m, field) for m in metrics if getattr(m, field) is not None]
        return float(sum(Fraction(v) for v in values) / len(values)) if values else None

    return Metrics(accuracy=mean("accuracy"), sensitivity=mean("sensitivity"), specificity=mean("specificity"))


def format_metric(value: Optional[float]) -> str:
    return "undefined" if value is None else f"{value:.4f}"


def metrics_lines(prefix: str, metrics: Metrics) -> list[str]:
    return [f"{prefix}.{name}={format_metric(getattr(metrics, name))}"
            for name in ("accuracy", "sensitivity", "specificity")]


def report_lines(result: CrossValResult) -> list[str]:
    """Key=value dump of a cross-validation result."""
    lines = []
    for fold in result.folds:
        c = fold.confusion
        lines.append(f"fold{fold.fold}.confusion=tp:{c.tp},fn:{c.fn},tn:{c.tn},fp:{c.fp}")
        lines += metrics_lines(f"fold{fold.fold}", fold.metrics)
    c = result.pooled_confusion
    lines.append(f"pooled.confusion=tp:{c.tp},fn:{c.fn},tn:{c.tn},fp:{c.fp}")
    lines += metrics_lines("pooled", result.pooled)
    lines += metrics_lines("mean", result.mean)
    return lines


# ── Cross-validation ─────────────────────────────────────────────────────────

def _capsnet_fold(
    train: list[ConnectivityMatrix],
    test: list[ConnectivityMatrix],
    model_config: ModelConfig,
    train_config: TrainConfig,
    loss_config: LossConfig,
    fold_seed: int,
) -> tuple[list[Label], object]:
    params, history = fit(train, model_config, train_config.model_copy(update={"seed": fold_seed}), loss_config)
    predictions = [predict(params, model_config, sample)[1] for sample in test]
    return predictions, (params, history)


def fold_seed(seed: int, fold: int) -> int:
    return stream_key(seed, "fold", fold)


def _run_fold(args) -> tuple[int, list[Label], object]:
    fold, train, test, model_config, train_config, loss_config, seed = args
    try:
        predictions, artifacts = _capsnet_fold(train, test, model_config, train_config, loss_config,
                                               fold_seed(seed, fold))
    except MKCapsError as e:
        raise FoldError(fold, e) from e
    return fold, predictions, artifacts


def summarize(folds: list[FoldResult]) -> CrossValResult:
    pooled = ConfusionCounts()
    for fold in folds:
        pooled = pooled + fold.confusion
    return CrossValResult(
        folds=folds,
        pooled_confusion=pooled,
        pooled=compute_metrics(pooled),
        mean=mean_metrics([f.metrics for f in folds]),
    )


def fold_result(fold: int, truth: list[Label], predicted: list[Label]) -> FoldResult:
    confusion = ConfusionCounts.from_predictions(truth, predicted)
    return FoldResult(fold=fold, confusion=confusion, metrics=compute_metrics(confusion))


def cross_validate(
    samples: Sequence[ConnectivityMatrix],
    model_config: ModelConfig,
    train_config: TrainConfig,
    loss_config: LossConfig,
    k: int,
    seed: int,
    jobs: int = 1,
    on_fold: Callable[[int, object], None] | None = None,
) -> CrossValResult:
    """
    Fit on k-1 folds, predict the held-out fold, for every fold. Each fold
    trains with its own seed derived from (seed, fold), so results do not
    depend on `jobs`. `on_fold(fold, (params, history))` sees each fold's
    trained model in fold order.
    """
    labels = [sample.label for sample in samples]
    plan = stratified_kfold(labels, k, seed)
    tasks = [
        (fold, [samples[i] for i in train_indices(plan, fold)], [samples[i] for i in plan.folds[fold]],
         model_config, train_config, loss_config, seed)
        for fold in range(k)
    ]

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_fold, tasks))
    else:
        outcomes = [_run_fold(task) for task in tasks]

    results = []
    for fold, predictions, artifacts in sorted(outcomes, key=lambda o: o[0]):
        truth = [labels[i] for i in plan.folds[fold]]
        result = fold_result(fold, truth, predictions)
        logger.info("fold %d: accuracy %s", fold, format_metric(result.metrics.accuracy))
        if on_fold is not None:
            on_fold(fold, artifacts)
        results.append(result)
    return summarize(results)
