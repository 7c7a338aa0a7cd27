"""
Synthetic dataset generator.

Each sample draws independent white noise for every ROI; ROIs inside a block
additionally share one latent factor whose weight depends on the sample's
class. Samples alternate SZ, HC, SZ, ... and each sample reads its own
random stream, so the output is a pure function of the spec.
"""

import logging
from pathlib import Path

import numpy as np

from core.errors import EmptySpecError
from core.rng import RandomStream, stream_key
from models.matrices import ConnectivityMatrix, TimeSeries
from models.schemas import DatasetManifest, Label, ManifestEntry, SynthSpec
from services.connectivity import connectivity_matrix

logger = logging.getLogger(__name__)


def sample_path(index: int) -> str:
    return f"matrices/sample_{index:04d}.csv"


def synthesize_series(spec: SynthSpec, label: Label, rng: RandomStream) -> TimeSeries:
    noise = rng.normal((spec.n_rois, spec.n_timepoints))
    series = spec.noise * noise
    for block in spec.blocks:
        c = block.coupling(label)
        factor = rng.normal(spec.n_timepoints)
        rows = slice(block.start, block.stop)
        # coupling^2 is the within-block correlation at unit noise
        series[rows] = c * factor + spec.noise * np.sqrt(1.0 - c * c) * noise[rows]
    return TimeSeries(series)


def generate_synthetic(spec: SynthSpec, root: Path = Path(".")) -> tuple[DatasetManifest, list[ConnectivityMatrix]]:
    if spec.n_per_class == 0:
        raise EmptySpecError("synthetic spec asks for 0 samples per class")

    base = RandomStream(spec.seed, stream_key("synthetic"))
    entries: list[ManifestEntry] = []
    matrices: list[ConnectivityMatrix] = []
    for index in range(2 * spec.n_per_class):
        label = Label.sz if index % 2 == 0 else Label.hc
        path = sample_path(index)
        series = synthesize_series(spec, label, base.derive(index))
        matrices.append(connectivity_matrix(series, label=label, sample_id=path))
        entries.append(ManifestEntry(path=path, label=label))

    logger.info("generated %d synthetic samples (%d ROIs, %d timepoints)",
                len(matrices), spec.n_rois, spec.n_timepoints)
    return DatasetManifest(root=Path(root), entries=entries), matrices
