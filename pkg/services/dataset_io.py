"""
Dataset files.

Matrix file: N lines of N comma-separated decimals (17 significant digits,
exact round-trip), no header, LF endings.
Manifest file: CSV with header `path,label`, paths relative to the manifest.
"""

import io
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import ValidationError

from core.errors import DataError, DimensionError, ParseError
from core.files import atomic_write_text
from models.matrices import ConnectivityMatrix
from models.schemas import DatasetManifest, Label, ManifestEntry

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["path", "label"]
SYMMETRY_TOLERANCE = 1e-9


# ── Matrices ─────────────────────────────────────────────────────────────────

def format_matrix(matrix: ConnectivityMatrix) -> str:
    buf = io.StringIO()
    np.savetxt(buf, matrix.values, fmt="%.17g", delimiter=",", newline="\n")
    return buf.getvalue()


def save_matrix(path: Path, matrix: ConnectivityMatrix) -> None:
    atomic_write_text(path, format_matrix(matrix))


def parse_matrix(text: str, source: str = "<matrix>", label: Label | None = None) -> ConnectivityMatrix:
    lines = [line for line in text.split("\n") if line.strip()]
    if not lines:
        raise DimensionError(f"{source}: empty matrix file")

    width = len(lines[0].split(","))
    rows = []
    for i, line in enumerate(lines):
        parts = line.split(",")
        if len(parts) != width:
            raise DimensionError(f"{source}: row {i} has {len(parts)} values, expected {width}")
        try:
            rows.append(np.array(parts, dtype=np.float64))
        except ValueError:
            raise ParseError(f"{source}: row {i} contains a non-numeric value")
    if len(rows) != width:
        raise DimensionError(
            f"{source}: matrix is not square ({len(rows)} rows x {width} columns); "
            f"row {min(len(rows), width)} is where the mismatch starts"
        )

    values = np.vstack(rows)
    if not np.all(np.isfinite(values)):
        raise ParseError(f"{source}: non-finite value")
    gap = np.abs(values - values.T)
    if gap.max() > SYMMETRY_TOLERANCE:
        i, j = np.unravel_index(int(np.argmax(gap)), gap.shape)
        raise ParseError(f"{source}: asymmetric at [{i}][{j}] (difference {gap[i, j]:.3g})")
    values = (values + values.T) / 2.0
    if np.any(np.diag(values) != 0.0):
        logger.warning("%s: nonzero diagonal forced to 0", source)
        np.fill_diagonal(values, 0.0)
    return ConnectivityMatrix(values=values, label=label, sample_id=source)


def load_matrix(path: Path, label: Label | None = None) -> ConnectivityMatrix:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read matrix file {path}: {e.strerror}")
    return parse_matrix(text, source=str(path), label=label)


# ── Manifests ────────────────────────────────────────────────────────────────

def save_manifest(path: Path, manifest: DatasetManifest) -> None:
    frame = pd.DataFrame(
        [(e.path, e.label.value) for e in manifest.entries], columns=MANIFEST_COLUMNS
    )
    atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))


def load_manifest(path: Path) -> DatasetManifest:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"cannot read manifest {path}: {e}")
    if list(frame.columns) != MANIFEST_COLUMNS:
        raise ParseError(f"{path}: header must be exactly 'path,label', got '{','.join(frame.columns)}'")

    allowed = {label.value for label in Label}
    entries = []
    for row, (rel, token) in enumerate(frame.itertuples(index=False, name=None), start=2):
        if token not in allowed:
            raise ParseError(f"{path}:{row}: unknown label '{token}', allowed tokens are {sorted(allowed)}")
        entries.append(ManifestEntry(path=rel, label=Label(token)))
    try:
        return DatasetManifest(root=path.parent, entries=entries)
    except ValidationError as e:
        raise ParseError(f"{path}: {e.errors()[0]['msg']}")


def load_dataset(manifest_path: Path) -> tuple[DatasetManifest, list[ConnectivityMatrix]]:
    manifest = load_manifest(manifest_path)
    matrices = []
    for entry in manifest.entries:
        matrix = load_matrix(manifest.root / entry.path, label=entry.label)
        matrices.append(ConnectivityMatrix(values=matrix.values, label=entry.label, sample_id=entry.path))
    logger.info("loaded %d matrices from %s", len(matrices), manifest_path)
    return manifest, matrices


def save_dataset(manifest_path: Path, manifest: DatasetManifest, matrices: list[ConnectivityMatrix]) -> None:
    root = Path(manifest_path).parent
    for entry, matrix in zip(manifest.entries, matrices):
        save_matrix(root / entry.path, matrix)
    save_manifest(manifest_path, manifest)
    logger.info("wrote %d matrices and %s", len(matrices), manifest_path)
