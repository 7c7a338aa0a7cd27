"""Desk-scale synthetic runs. Minutes each; enable with --runslow."""

import pytest

from models.schemas import AblationSpec, BaselineMethod, BlockSpec, LossConfig, ModelConfig, SynthSpec, TrainConfig
from services.ablation import run_ablation
from services.baselines import cross_validate_baseline
from services.evaluation import cross_validate
from services.synthetic import generate_synthetic

pytestmark = pytest.mark.slow

SMALL_MODEL = ModelConfig(n_rois=16, kernel_widths=(1, 3), n_filters=8, n_slices=2, capsule_len=4)
TRAIN = TrainConfig(epochs=100, learning_rate=0.05, batch_size=10, early_stop_threshold=0.02, seed=0)


def dataset(coupling_sz: float, seed: int):
    spec = SynthSpec(
        n_rois=16, n_timepoints=200, n_per_class=100, noise=1.0, seed=seed,
        blocks=[BlockSpec(start=0, stop=4, coupling_sz=coupling_sz, coupling_hc=0.0)],
    )
    return generate_synthetic(spec)[1]


def test_capsnet_separates_coupled_block():
    result = cross_validate(dataset(0.8, 1), SMALL_MODEL, TRAIN, LossConfig(), k=5, seed=0)
    assert result.mean.accuracy >= 0.9


def test_capsnet_stays_at_chance_without_signal():
    accuracies = [
        cross_validate(dataset(0.0, seed), SMALL_MODEL, TRAIN.model_copy(update={"epochs": 20}), LossConfig(),
                       k=5, seed=seed).mean.accuracy
        for seed in range(5)
    ]
    assert 0.35 <= sum(accuracies) / len(accuracies) <= 0.65


@pytest.mark.parametrize("method", list(BaselineMethod))
def test_baselines_on_separable_and_null_sets(method):
    assert cross_validate_baseline(dataset(0.8, 2), method, k=5, seed=0).pooled.accuracy > 0.8
    null = cross_validate_baseline(dataset(0.0, 3), method, k=5, seed=0).pooled.accuracy
    assert 0.35 <= null <= 0.65


def test_full_grid_runs_and_multi_kernel_beats_square():
    base = ModelConfig(n_rois=16, kernel_widths=(1, 2, 4), n_filters=8, n_slices=2, capsule_len=4)
    spec = AblationSpec.model_validate({"cells": [
        {**cell.model_dump(), "kernel": cell.kernel.replace("15", "4")} for cell in AblationSpec.standard_grid().cells
    ]})
    table = run_ablation(dataset(0.8, 4), spec, base, TRAIN.model_copy(update={"epochs": 40}), LossConfig(), k=5, seed=0)
    assert len(table) == 8
    assert "failed" not in set(table["accuracy"])
    assert float(table.loc[7, "accuracy"]) >= float(table.loc[4, "accuracy"])
