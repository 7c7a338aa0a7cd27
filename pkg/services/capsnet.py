"""
Multi-kernel capsule network forward pass.

  connectivity matrix
    -> one column convolution per kernel width (optional rectifier)
    -> 1x1 projection to n_slices * capsule_len per channel, squash
    -> dropout (train mode)
    -> class predictions u_hat_ji = W_ij u_i
    -> routing-by-agreement -> one capsule per class

Primary capsules are ordered channel-major, then slice, then position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from core.errors import ConfigError, ContractError, DimensionError
from core.rng import RandomStream
from core.tensor import (
    Tensor, as_tensor, concat, conv_columns, conv_square, einsum, gather_rows, norm, softmax, squash,
)
from models.matrices import ConnectivityMatrix
from models.schemas import DropoutStrategy, KernelShape, Label, Mode, ModelConfig, WeightSharing


# ─────────────────────────────────────────
#  Parameters and intermediate state
# ─────────────────────────────────────────

def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape of every learnable tensor, in a fixed order."""
    shapes: dict[str, tuple[int, ...]] = {}
    projected = config.n_slices * config.capsule_len
    for c, k in enumerate(config.kernel_widths):
        if config.kernel_shape == KernelShape.square:
            shapes[f"conv{c}.weight"] = (config.n_filters, k, k)
        else:
            shapes[f"conv{c}.weight"] = (config.n_filters, config.n_rois, k)
        if config.use_bias:
            shapes[f"conv{c}.bias"] = (config.n_filters,)
        shapes[f"primary{c}.weight"] = (projected, config.n_filters)
        if config.use_bias:
            shapes[f"primary{c}.bias"] = (projected,)
    lower = config.n_primary if config.weight_sharing == WeightSharing.per_pair \
        else len(config.kernel_widths) * config.n_slices
    shapes["route.weight"] = (lower, config.n_classes, config.capsule_len, config.capsule_len)
    return shapes


@dataclass(frozen=True)
class ModelParams:
    tensors: dict[str, np.ndarray]

    def as_tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {name: Tensor(value, requires_grad=requires_grad, name=name)
                for name, value in self.tensors.items()}

    def check(self, config: ModelConfig) -> None:
        check_param_shapes(self.tensors, config)


def check_param_shapes(params: Mapping[str, object], config: ModelConfig) -> None:
    expected = param_shapes(config)
    missing = [name for name in expected if name not in params]
    if missing:
        raise DimensionError(f"parameters missing for layer(s) {missing}")
    for name, shape in expected.items():
        actual = tuple(np.shape(params[name].data if isinstance(params[name], Tensor) else params[name]))
        if actual != shape:
            raise DimensionError(f"layer {name}: expected shape {shape}, got {actual}")


@dataclass(frozen=True)
class PrimaryCapsules:
    capsules: Tensor                  # (n_primary, capsule_len)
    channel_sizes: tuple[int, ...]
    mask: np.ndarray | None = None    # multiplier applied by dropout, (n_primary, capsule_len)

    @property
    def count(self) -> int:
        return self.capsules.shape[0]

    def dropped_per_channel(self) -> list[int]:
        if self.mask is None:
            return [0] * len(self.channel_sizes)
        dead = np.all(self.mask == 0.0, axis=1)
        bounds = np.cumsum((0,) + self.channel_sizes)
        return [int(dead[lo:hi].sum()) for lo, hi in zip(bounds[:-1], bounds[1:])]


@dataclass(frozen=True)
class RoutingState:
    logits: np.ndarray                       # final b_ij, (lower, classes)
    coupling: np.ndarray                     # final c_ij
    snapshots: tuple[np.ndarray, ...]        # c_ij at every iteration
    pre_squash: np.ndarray                   # s_j, (classes, capsule_len)
    class_capsules: np.ndarray               # v_j


@dataclass(frozen=True)
class ForwardResult:
    class_capsules: Tensor
    primary: PrimaryCapsules
    routing: RoutingState
    cache: dict[str, Tensor] = field(default_factory=dict)


def capsule_coordinates(config: ModelConfig) -> np.ndarray:
    """(channel, slice, position) for every primary capsule, in capsule order."""
    blocks = []
    for c, k in enumerate(config.kernel_widths):
        positions = config.positions(k)
        s, p = np.divmod(np.arange(config.n_slices * positions), positions)
        blocks.append(np.column_stack([np.full_like(s, c), s, p]))
    return np.vstack(blocks)


def slice_groups(config: ModelConfig) -> np.ndarray:
    """Shared-weight group (channel * n_slices + slice) for every primary capsule."""
    coords = capsule_coordinates(config)
    return coords[:, 0] * config.n_slices + coords[:, 1]


# ─────────────────────────────────────────
#  Layers
# ─────────────────────────────────────────

def transform_capsules(weights, u: PrimaryCapsules | Tensor, groups: np.ndarray | None = None) -> Tensor:
    """u_hat[i, j] = W_ij @ u_i; `groups` maps each capsule to a shared W row."""
    capsules = u.capsules if isinstance(u, PrimaryCapsules) else as_tensor(u)
    weights = as_tensor(weights)
    if groups is not None:
        weights = gather_rows(weights, groups)
    if weights.ndim != 4 or capsules.ndim != 2:
        raise DimensionError(f"transform expects W (n, classes, L, L) and u (n, L), "
                             f"got {weights.shape} and {capsules.shape}")
    n, _, rows, cols = weights.shape
    if n != capsules.shape[0] or cols != capsules.shape[1]:
        raise DimensionError(f"W {weights.shape} does not fit capsules {capsules.shape}")
    return einsum("njab,nb->nja", weights, capsules)


def dynamic_routing(u_hat, iterations: int) -> tuple[Tensor, RoutingState]:
    """Routing-by-agreement over predictions u_hat (lower, classes, capsule_len)."""
    if iterations < 1:
        raise ContractError(f"routing needs at least one iteration, got {iterations}")
    u_hat = as_tensor(u_hat)
    lower, classes, _ = u_hat.shape

    b = Tensor(np.zeros((lower, classes)))
    snapshots = []
    for it in range(iterations):
        c = softmax(b, axis=1)
        snapshots.append(c.data)
        s = einsum("nj,njl->jl", c, u_hat)
        v = squash(s, axis=-1)
        if it < iterations - 1:
            b = b + einsum("njl,jl->nj", u_hat, v)

    state = RoutingState(
        logits=b.data,
        coupling=c.data,
        snapshots=tuple(snapshots),
        pre_squash=s.data,
        class_capsules=v.data,
    )
    return v, state


def drop_count(rate: float, size: int) -> int:
    """round(rate * size), halves rounding up."""
    return int(math.floor(rate * size + 0.5))


def apply_dropout(
    u: PrimaryCapsules,
    strategy: DropoutStrategy,
    rate: float,
    rng: RandomStream | None,
    mode: Mode = Mode.train,
) -> PrimaryCapsules:
    """
    scalar:  every element dropped independently with probability `rate`
    vector:  round(rate * total) whole capsules drawn from all channels pooled
    capsule: round(rate * channel size) whole capsules inside every channel
    Survivors are scaled by 1 / (1 - rate).
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == Mode.infer or strategy == DropoutStrategy.none or rate == 0.0:
        return u
    if rng is None:
        raise ContractError("train-mode dropout needs a RandomStream")

    n, length = u.capsules.shape
    keep = np.ones((n, length))
    if strategy == DropoutStrategy.scalar:
        keep = (rng.random((n, length)) >= rate).astype(np.float64)
    elif strategy == DropoutStrategy.vector:
        keep[rng.choice(n, drop_count(rate, n))] = 0.0
    elif strategy == DropoutStrategy.capsule:
        offset = 0
        for size in u.channel_sizes:
            keep[offset + rng.choice(size, drop_count(rate, size))] = 0.0
            offset += size

    mask = keep / (1.0 - rate)
    return replace(u, capsules=u.capsules * mask, mask=mask)


def forward(
    params: Mapping[str, Tensor | np.ndarray],
    config: ModelConfig,
    matrix: ConnectivityMatrix | np.ndarray,
    mode: Mode = Mode.infer,
    rng: RandomStream | None = None,
) -> ForwardResult:
    x = matrix.values if isinstance(matrix, ConnectivityMatrix) else np.asarray(matrix, dtype=np.float64)
    if x.shape != (config.n_rois, config.n_rois):
        raise DimensionError(f"input layer: expected {config.n_rois}x{config.n_rois} matrix, got {x.shape}")
    check_param_shapes(params, config)
    p = {name: as_tensor(value) for name, value in params.items()}
    bias = (lambda name: p[name]) if config.use_bias else (lambda name: None)

    cache: dict[str, Tensor] = {}
    channels = []
    for c, k in enumerate(config.kernel_widths):
        if config.kernel_shape == KernelShape.square:
            features = conv_square(x, p[f"conv{c}.weight"], bias(f"conv{c}.bias"))
            features = features.reshape(config.n_filters, -1)
        else:
            features = conv_columns(x, p[f"conv{c}.weight"], bias(f"conv{c}.bias"))
        if config.conv_activation:
            features = features.relu()
        cache[f"conv{c}"] = features

        projected = einsum("of,fp->op", p[f"primary{c}.weight"], features)
        if config.use_bias:
            projected = projected + p[f"primary{c}.bias"].reshape(-1, 1)
        positions = features.shape[1]
        capsules = (projected.reshape(config.n_slices, config.capsule_len, positions)
                    .transpose(0, 2, 1)
                    .reshape(config.n_slices * positions, config.capsule_len))
        channels.append(capsules)

    primary = PrimaryCapsules(
        capsules=squash(concat(channels, axis=0), axis=-1),
        channel_sizes=tuple(config.channel_sizes),
    )
    if mode == Mode.train:
        primary = apply_dropout(primary, config.dropout_strategy, config.dropout_rate, rng, mode)

    groups = slice_groups(config) if config.weight_sharing == WeightSharing.per_slice else None
    u_hat = transform_capsules(p["route.weight"], primary, groups)
    cache["u_hat"] = u_hat

    v, state = dynamic_routing(u_hat, config.routing_iterations)
    return ForwardResult(class_capsules=v, primary=primary, routing=state, cache=cache)


def capsule_lengths(v) -> Tensor:
    return norm(v, axis=-1)


def class_probabilities(v) -> tuple[np.ndarray, int]:
    """Capsule lengths and the arg-max class (ties go to the lower index)."""
    data = v.data if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64)
    lengths = np.sqrt(np.sum(data * data, axis=-1))
    return lengths, int(np.argmax(lengths))


def predict(params: ModelParams, config: ModelConfig, matrix: ConnectivityMatrix) -> tuple[np.ndarray, Label]:
    result = forward(params.tensors, config, matrix, Mode.infer)
    lengths, index = class_probabilities(result.class_capsules)
    return lengths, Label.from_index(index)
