"""
Connectivity service.

ROI time series -> Pearson correlation -> Fisher r-to-z, assembled into a
symmetric matrix with a zero diagonal.
"""

import numpy as np
from scipy import stats

from core.errors import DegenerateInputError, DimensionError, DomainError
from models.matrices import ConnectivityMatrix, TimeSeries
from models.schemas import Label

R_CLAMP = 1.0 - 1e-7


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise DimensionError(f"series lengths differ: {x.shape} vs {y.shape}")
    if x.size < 3:
        raise DimensionError(f"pearson needs at least 3 samples, got {x.size}")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise DegenerateInputError("pearson input has zero variance")
    r = stats.pearsonr(x, y)[0]
    return float(np.clip(r, -1.0, 1.0))


def fisher_z(r):
    """atanh(r), with |r| clamped to 1 - 1e-7 so perfect correlation stays finite."""
    arr = np.asarray(r, dtype=np.float64)
    if np.any(np.abs(arr) > 1.0) or np.any(np.isnan(arr)):
        raise DomainError(f"correlation outside [-1, 1]: {r}")
    z = np.arctanh(np.clip(arr, -R_CLAMP, R_CLAMP))
    return float(z) if z.ndim == 0 else z


def connectivity_matrix(ts: TimeSeries, label: Label | None = None, sample_id: str = "") -> ConnectivityMatrix:
    n = ts.n_rois
    r = np.clip(np.corrcoef(ts.values), -1.0, 1.0)
    upper = np.triu_indices(n, k=1)
    z = np.zeros((n, n))
    z[upper] = fisher_z(r[upper])
    # lower triangle mirrors the upper one exactly; diagonal stays 0
    return ConnectivityMatrix(values=z + z.T, label=label, sample_id=sample_id)
