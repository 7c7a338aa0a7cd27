"""
Structure ablation: cross-validate one MKCapsnet variant per grid cell and
tabulate the results.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Sequence

import pandas as pd
from pydantic import ValidationError

from core.errors import ConfigError, MKCapsError
from core.files import atomic_write_text
from models.matrices import ConnectivityMatrix
from models.schemas import AblationCell, AblationSpec, KernelShape, LossConfig, ModelConfig, TrainConfig
from services.evaluation import cross_validate, format_metric

logger = logging.getLogger(__name__)

ABLATION_COLUMNS = ["dropout", "kernel", "multislice", "loss_norm", "accuracy", "sensitivity", "specificity"]
FAILED = "failed"


def cell_configs(cell: AblationCell, model: ModelConfig, loss: LossConfig) -> tuple[ModelConfig, LossConfig]:
    """Apply one cell on top of the base configuration."""
    update: dict[str, object] = {"dropout_strategy": cell.dropout}
    if cell.kernel == "multi":
        update["kernel_shape"] = KernelShape.column
    else:
        shape, _, width = cell.kernel.partition("-")
        update["kernel_shape"] = KernelShape(shape)
        update["kernel_widths"] = (int(width),)
    if not cell.multislice:
        update["n_slices"] = 1

    try:
        cell_model = ModelConfig.model_validate({**model.model_dump(), **update})
        cell_loss = LossConfig.model_validate({**loss.model_dump(), "norm": cell.loss_norm})
    except ValidationError as e:
        raise ConfigError(f"ablation cell {cell_label(cell)}: {e.errors()[0]['msg']}")
    return cell_model, cell_loss


def cell_label(cell: AblationCell) -> str:
    return f"{cell.dropout.value}/{cell.kernel}/{'multislice' if cell.multislice else 'single'}/{cell.loss_norm.value}"


def load_grid(path: Path | None) -> AblationSpec:
    """JSON `{"cells": [...]}`; no path means the standard eight-cell grid."""
    if path is None:
        return AblationSpec.standard_grid()
    try:
        return AblationSpec.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
    except OSError as e:
        raise ConfigError(f"cannot read ablation grid {path}: {e.strerror}")
    except (json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"invalid ablation grid {path}: {e}")


def run_ablation(
    samples: Sequence[ConnectivityMatrix],
    spec: AblationSpec,
    model_config: ModelConfig,
    train_config: TrainConfig,
    loss_config: LossConfig,
    k: int,
    seed: int,
    jobs: int = 1,
) -> pd.DataFrame:
    rows = []
    for cell in spec.cells:
        row = {
            "dropout": cell.dropout.value,
            "kernel": cell.kernel,
            "multislice": "on" if cell.multislice else "off",
            "loss_norm": cell.loss_norm.value,
        }
        logger.info("ablation cell %s: start", cell_label(cell))
        try:
            cell_model, cell_loss = cell_configs(cell, model_config, loss_config)
            result = cross_validate(samples, cell_model, train_config, cell_loss, k, seed, jobs=jobs)
        except MKCapsError as e:
            logger.warning("ablation cell %s failed: %s", cell_label(cell), e.detail)
            row.update(accuracy=FAILED, sensitivity=FAILED, specificity=FAILED)
        else:
            row.update(
                accuracy=format_metric(result.pooled.accuracy),
                sensitivity=format_metric(result.pooled.sensitivity),
                specificity=format_metric(result.pooled.specificity),
            )
            logger.info("ablation cell %s: accuracy %s", cell_label(cell), row["accuracy"])
        rows.append(row)
    return pd.DataFrame(rows, columns=ABLATION_COLUMNS)


def save_ablation(path: Path, table: pd.DataFrame) -> None:
    atomic_write_text(path, table.to_csv(index=False, lineterminator="\n"))
    logger.info("wrote %d ablation rows to %s", len(table), path)
