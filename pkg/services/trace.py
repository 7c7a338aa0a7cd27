"""
Routing trace export: every routing iteration's coupling coefficients for one
input, keyed by the primary capsule's (channel, slice, position).
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from core.config import settings
from core.errors import DimensionError, ShapeMismatchError
from core.files import atomic_write_text
from models.matrices import ConnectivityMatrix
from models.schemas import Mode, ModelConfig
from services.capsnet import ModelParams, capsule_coordinates, forward

logger = logging.getLogger(__name__)

COORDINATE_COLUMNS = ["channel", "slice", "position"]


def trace_columns(n_classes: int) -> list[str]:
    return ["sample_id", "iteration", *COORDINATE_COLUMNS, *(f"c_class{j}" for j in range(n_classes))]


def routing_trace(params: ModelParams, config: ModelConfig, matrix: ConnectivityMatrix,
                  sample_id: str | None = None) -> pd.DataFrame:
    """One row per (iteration, primary capsule); iterations count from 1."""
    if matrix.n != config.n_rois:
        raise ShapeMismatchError(f"checkpoint expects {config.n_rois} ROIs, input has {matrix.n}")
    try:
        result = forward(params.tensors, config, matrix, Mode.infer)
    except DimensionError as e:
        raise ShapeMismatchError(f"checkpoint does not match its config: {e.detail}")

    coords = capsule_coordinates(config)
    sample_id = sample_id if sample_id is not None else matrix.sample_id
    frames = []
    for iteration, coupling in enumerate(result.routing.snapshots, start=1):
        frame = pd.DataFrame(coords, columns=COORDINATE_COLUMNS)
        frame.insert(0, "iteration", iteration)
        frame.insert(0, "sample_id", sample_id)
        for j in range(config.n_classes):
            frame[f"c_class{j}"] = coupling[:, j]
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)[trace_columns(config.n_classes)]


def format_trace(trace: pd.DataFrame) -> str:
    return trace.to_csv(index=False, float_format=settings.float_format, lineterminator="\n")


def export_routing_trace(path: Path, params: ModelParams, config: ModelConfig, matrix: ConnectivityMatrix,
                         sample_id: str | None = None) -> pd.DataFrame:
    trace = routing_trace(params, config, matrix, sample_id)
    atomic_write_text(path, format_trace(trace))
    logger.info("wrote %d trace rows to %s", len(trace), path)
    return trace


def coupling_row_sums(trace: pd.DataFrame) -> np.ndarray:
    return trace.filter(like="c_class").to_numpy().sum(axis=1)
