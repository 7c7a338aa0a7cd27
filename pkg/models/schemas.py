from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ─────────────────────────────────────────
#  Helpers
# ─────────────────────────────────────────

def _split_ints(value):
    """Accept `1,4,6` style strings from flat config files."""
    if isinstance(value, str):
        return [int(part) for part in value.split(",") if part.strip()]
    return value


_FROZEN = ConfigDict(extra="forbid", frozen=True)


# ─────────────────────────────────────────
#  Enums
# ─────────────────────────────────────────

class Label(str, Enum):
    sz = "SZ"
    hc = "HC"

    @property
    def index(self) -> int:
        # SZ is the positive class and class capsule 0
        return 0 if self is Label.sz else 1

    @classmethod
    def from_index(cls, index: int) -> "Label":
        return cls.sz if index == 0 else cls.hc


class DropoutStrategy(str, Enum):
    none = "none"
    scalar = "scalar"
    vector = "vector"
    capsule = "capsule"


class KernelShape(str, Enum):
    column = "column"
    square = "square"


class WeightSharing(str, Enum):
    per_pair = "per-pair"
    per_slice = "per-slice"


class LossNorm(str, Enum):
    l1 = "L1"
    l2 = "L2"


class EarlyStopMode(str, Enum):
    absolute = "absolute"
    delta = "delta"


class Optimizer(str, Enum):
    sgd = "sgd"


class Mode(str, Enum):
    train = "train"
    infer = "infer"


class BaselineMethod(str, Enum):
    knn = "knn"
    lda = "lda"


# ─────────────────────────────────────────
#  Model / training configuration
# ─────────────────────────────────────────

class ModelConfig(BaseModel):
    model_config = _FROZEN

    n_rois: int = Field(default=116, ge=1)
    kernel_widths: tuple[int, ...] = (1, 4, 6, 7, 9, 15)
    kernel_shape: KernelShape = KernelShape.column
    n_filters: int = Field(default=64, ge=1)
    n_slices: int = Field(default=10, ge=1)
    capsule_len: int = Field(default=20, ge=1)
    n_classes: int = Field(default=2, ge=2)
    routing_iterations: int = Field(default=3, ge=1)
    conv_activation: bool = True
    use_bias: bool = True
    dropout_strategy: DropoutStrategy = DropoutStrategy.capsule
    dropout_rate: float = Field(default=0.5, ge=0.0, lt=1.0)
    weight_sharing: WeightSharing = WeightSharing.per_pair

    @field_validator("kernel_widths", mode="before")
    @classmethod
    def _split_widths(cls, value):
        return _split_ints(value)

    @field_validator("kernel_widths")
    @classmethod
    def _check_widths(cls, widths: tuple[int, ...]) -> tuple[int, ...]:
        if not widths:
            raise ValueError("at least one kernel width is required")
        if any(k < 1 for k in widths):
            raise ValueError("kernel widths must be positive")
        if len(set(widths)) != len(widths):
            raise ValueError("kernel widths must be unique")
        return widths

    @model_validator(mode="after")
    def _widths_fit(self) -> "ModelConfig":
        too_wide = [k for k in self.kernel_widths if k > self.n_rois]
        if too_wide:
            raise ValueError(f"kernel widths {too_wide} exceed n_rois={self.n_rois}")
        return self

    def positions(self, width: int) -> int:
        span = self.n_rois - width + 1
        return span * span if self.kernel_shape == KernelShape.square else span

    @property
    def channel_sizes(self) -> list[int]:
        """Primary capsule count per channel (one channel per kernel width)."""
        return [self.positions(k) * self.n_slices for k in self.kernel_widths]

    @property
    def n_primary(self) -> int:
        return sum(self.channel_sizes)


class LossConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    m_plus: float = 0.9
    m_minus: float = 0.1
    lambda_: float = Field(default=0.5, gt=0.0, alias="lambda")
    norm: LossNorm = LossNorm.l2

    @model_validator(mode="after")
    def _margins_ordered(self) -> "LossConfig":
        if not 0.0 < self.m_minus < self.m_plus < 1.0:
            raise ValueError("margins must satisfy 0 < m_minus < m_plus < 1")
        return self


class TrainConfig(BaseModel):
    model_config = _FROZEN

    epochs: int = Field(default=500, ge=1)
    learning_rate: float = Field(default=0.01, ge=0.0)
    batch_size: int = Field(default=3, ge=1)
    early_stop_threshold: float = Field(default=0.008, ge=0.0)
    early_stop_mode: EarlyStopMode = EarlyStopMode.absolute
    optimizer: Optimizer = Optimizer.sgd
    shuffle: bool = True
    seed: int = 0


# ─────────────────────────────────────────
#  Synthetic data
# ─────────────────────────────────────────

class BlockSpec(BaseModel):
    model_config = _FROZEN

    start: int = Field(ge=0)
    stop: int                 # exclusive
    coupling_sz: float = Field(ge=0.0, lt=1.0)
    coupling_hc: float = Field(ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _non_empty(self) -> "BlockSpec":
        if self.stop <= self.start:
            raise ValueError(f"block [{self.start}, {self.stop}) is empty")
        return self

    def coupling(self, label: Label) -> float:
        return self.coupling_sz if label == Label.sz else self.coupling_hc


class SynthSpec(BaseModel):
    model_config = _FROZEN

    n_rois: int = Field(default=16, ge=2)
    n_timepoints: int = Field(default=200, ge=3)
    n_per_class: int = Field(default=100, ge=0)
    blocks: list[BlockSpec] = Field(
        default_factory=lambda: [BlockSpec(start=0, stop=4, coupling_sz=0.8, coupling_hc=0.0)]
    )
    noise: float = Field(default=1.0, gt=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _blocks_in_range(self) -> "SynthSpec":
        for block in self.blocks:
            if block.stop > self.n_rois:
                raise ValueError(f"block [{block.start}, {block.stop}) outside [0, {self.n_rois})")
        return self


# ─────────────────────────────────────────
#  Datasets
# ─────────────────────────────────────────

class ManifestEntry(BaseModel):
    model_config = _FROZEN

    path: str
    label: Label


class DatasetManifest(BaseModel):
    model_config = _FROZEN

    root: Path                    # directory the entry paths are relative to
    entries: list[ManifestEntry]

    @field_validator("entries")
    @classmethod
    def _unique_paths(cls, entries: list[ManifestEntry]) -> list[ManifestEntry]:
        seen: set[str] = set()
        for entry in entries:
            if entry.path in seen:
                raise ValueError(f"duplicate manifest path '{entry.path}'")
            seen.add(entry.path)
        return entries

    @property
    def class_counts(self) -> dict[Label, int]:
        counts = {label: 0 for label in Label}
        for entry in self.entries:
            counts[entry.label] += 1
        return counts

    @property
    def labels(self) -> list[Label]:
        return [entry.label for entry in self.entries]


# ─────────────────────────────────────────
#  Evaluation
# ─────────────────────────────────────────

class ConfusionCounts(BaseModel):
    model_config = _FROZEN

    tp: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.tn + self.fp

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
            fp=self.fp + other.fp,
        )

    @classmethod
    def from_predictions(cls, truth: list[Label], predicted: list[Label]) -> "ConfusionCounts":
        tp = fn = tn = fp = 0
        for t, p in zip(truth, predicted):
            if t == Label.sz:
                tp, fn = (tp + 1, fn) if p == Label.sz else (tp, fn + 1)
            else:
                tn, fp = (tn + 1, fp) if p == Label.hc else (tn, fp + 1)
        return cls(tp=tp, fn=fn, tn=tn, fp=fp)


class Metrics(BaseModel):
    """None marks a metric whose denominator is zero."""

    model_config = _FROZEN

    accuracy: Optional[float] = None
    sensitivity: Optional[float] = None
    specificity: Optional[float] = None


class FoldPlan(BaseModel):
    model_config = _FROZEN

    k: int
    seed: int
    folds: list[list[int]]
    class_counts: list[dict[Label, int]]


class FoldResult(BaseModel):
    model_config = _FROZEN

    fold: int
    confusion: ConfusionCounts
    metrics: Metrics


class CrossValResult(BaseModel):
    model_config = _FROZEN

    folds: list[FoldResult]
    pooled_confusion: ConfusionCounts
    pooled: Metrics
    mean: Metrics


class AblationCell(BaseModel):
    model_config = _FROZEN

    dropout: DropoutStrategy
    kernel: str                 # "multi", "column-<k>" or "square-<k>"
    multislice: bool
    loss_norm: LossNorm

    @field_validator("kernel")
    @classmethod
    def _kernel_token(cls, kernel: str) -> str:
        if kernel == "multi":
            return kernel
        shape, _, width = kernel.partition("-")
        if shape not in ("column", "square") or not width.isdigit() or int(width) < 1:
            raise ValueError(f"kernel must be 'multi', 'column-<k>' or 'square-<k>', got '{kernel}'")
        return kernel


class AblationSpec(BaseModel):
    model_config = _FROZEN

    cells: list[AblationCell] = Field(min_length=1)

    @classmethod
    def standard_grid(cls) -> "AblationSpec":
        """The eight structure comparisons: dropout, kernel, slicing and loss norm."""
        cap, l2 = DropoutStrategy.capsule, LossNorm.l2
        rows = [
            (DropoutStrategy.scalar, "column-1", False, l2),
            (DropoutStrategy.vector, "column-1", False, l2),
            (cap, "column-1", False, l2),
            (cap, "column-15", False, l2),
            (cap, "square-15", False, l2),
            (cap, "multi", False, l2),
            (cap, "multi", True, LossNorm.l1),
            (cap, "multi", True, l2),
        ]
        return cls(cells=[
            AblationCell(dropout=d, kernel=k, multislice=m, loss_norm=n) for d, k, m, n in rows
        ])
