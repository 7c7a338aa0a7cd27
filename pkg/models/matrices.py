from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.errors import DataError, DegenerateInputError, DimensionError
from models.schemas import Label


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """ROI signals, one row per region."""

    values: np.ndarray

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 2:
            raise DimensionError(f"time series must be (n_rois, n_timepoints), got shape {values.shape}")
        if values.shape[1] < 3:
            raise DimensionError(f"time series needs at least 3 timepoints, got {values.shape[1]}")
        flat = np.flatnonzero(np.ptp(values, axis=1) == 0.0)
        if flat.size:
            raise DegenerateInputError(f"ROI {int(flat[0])} has zero variance")
        object.__setattr__(self, "values", values)

    @property
    def n_rois(self) -> int:
        return self.values.shape[0]

    @property
    def n_timepoints(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ConnectivityMatrix:
    """Symmetric Fisher-z connectivity with a zero diagonal."""

    values: np.ndarray
    label: Optional[Label] = None
    sample_id: str = field(default="")

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionError(f"connectivity matrix must be square, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("connectivity matrix has non-finite values")
        if not np.array_equal(values, values.T):
            raise DataError("connectivity matrix is not symmetric")
        if np.any(np.diag(values) != 0.0):
            raise DataError("connectivity matrix diagonal must be zero")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def upper_triangle(self) -> np.ndarray:
        """Off-diagonal upper-triangle values, row-major (n(n-1)/2 features)."""
        return self.values[np.triu_indices(self.n, k=1)]
