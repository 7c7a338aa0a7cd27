"""
Training service: margin loss, parameter initialisation and the mini-batch
gradient-descent loop with early stopping.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Mapping, Sequence

import numpy as np

from core.errors import ContractError, DataError, NonFiniteLossError
from core.rng import RandomStream, stream_key
from core.tensor import GradientRecord, Tensor, as_tensor, backward
from models.matrices import ConnectivityMatrix
from models.schemas import EarlyStopMode, Label, LossConfig, LossNorm, Mode, ModelConfig, Optimizer, TrainConfig
from services.capsnet import ModelParams, capsule_lengths, forward, param_shapes

logger = logging.getLogger(__name__)


# ── Loss ─────────────────────────────────────────────────────────────────────

def margin_loss(lengths, target: int, cfg: LossConfig = LossConfig()) -> Tensor:
    """
    Sum over classes of
        T_j * max(0, m+ - |v_j|)^p + lambda * (1 - T_j) * max(0, |v_j| - m-)^p
    with p = 2 for L2 and p = 1 for L1.
    """
    lengths = as_tensor(lengths)
    if np.any(lengths.data >= 1.0):
        raise ContractError(f"capsule length >= 1 reached the loss: {lengths.data.tolist()}")
    n_classes = lengths.shape[-1]
    if not 0 <= target < n_classes:
        raise ContractError(f"target class {target} outside [0, {n_classes})")

    present = np.zeros(n_classes)
    present[target] = 1.0
    hinge_present = (cfg.m_plus - lengths).relu()
    hinge_absent = (lengths - cfg.m_minus).relu()
    if cfg.norm == LossNorm.l2:
        hinge_present = hinge_present ** 2
        hinge_absent = hinge_absent ** 2
    return (present * hinge_present + cfg.lambda_ * (1.0 - present) * hinge_absent).sum()


def batch_loss(
    params: Mapping[str, Tensor],
    config: ModelConfig,
    loss_cfg: LossConfig,
    samples: Sequence[ConnectivityMatrix],
    rng: RandomStream | None,
    mode: Mode = Mode.train,
) -> Tensor:
    """Mean margin loss over the batch."""
    total = None
    for sample in samples:
        result = forward(params, config, sample, mode, rng)
        loss = margin_loss(capsule_lengths(result.class_capsules), sample.label.index, loss_cfg)
        total = loss if total is None else total + loss
    return total * (1.0 / len(samples))


# ── Initialisation ───────────────────────────────────────────────────────────

def fans(shape: tuple[int, ...]) -> tuple[int, int]:
    if len(shape) == 2:                       # (out, in)
        return shape[1], shape[0]
    if len(shape) == 3:                       # conv filters (F, h, w)
        receptive = shape[1] * shape[2]
        return receptive, shape[0] * receptive
    return shape[-1], shape[-2]               # route matrices (..., L_out, L_in)


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases; each tensor reads its own stream."""
    base = RandomStream(seed, stream_key("init"))
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape)
            continue
        fan_in, fan_out = fans(shape)
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        tensors[name] = base.derive(name).uniform(-bound, bound, shape)
    return ModelParams(tensors)


# ── Optimisers ───────────────────────────────────────────────────────────────

def sgd_step(params: ModelParams, grads: Mapping[str, np.ndarray], learning_rate: float) -> ModelParams:
    return ModelParams({name: value - learning_rate * grads[name] for name, value in params.tensors.items()})


OPTIMIZERS: dict[Optimizer, Callable[[ModelParams, Mapping[str, np.ndarray], float], ModelParams]] = {
    Optimizer.sgd: sgd_step,
}


# ── Training loop ────────────────────────────────────────────────────────────

def batch_slices(n: int, batch_size: int) -> list[slice]:
    return [slice(start, min(start + batch_size, n)) for start in range(0, n, batch_size)]


def should_stop(history: list[float], cfg: TrainConfig) -> bool:
    if cfg.early_stop_mode == EarlyStopMode.absolute:
        return history[-1] < cfg.early_stop_threshold
    return len(history) >= 2 and abs(history[-1] - history[-2]) < cfg.early_stop_threshold


def check_trainable(samples: Sequence[ConnectivityMatrix]) -> None:
    if not samples:
        raise DataError("training set is empty")
    if any(sample.label is None for sample in samples):
        raise DataError("every training sample needs a label")
    missing = {Label.sz, Label.hc} - {sample.label for sample in samples}
    if missing:
        raise DataError(f"training set lacks class(es) {sorted(label.value for label in missing)}")


def fit(
    samples: Sequence[ConnectivityMatrix],
    model_config: ModelConfig,
    train_config: TrainConfig,
    loss_config: LossConfig,
    initial: ModelParams | None = None,
) -> tuple[ModelParams, list[float]]:
    check_trainable(samples)
    params = initial or init_params(model_config, train_config.seed)
    step = OPTIMIZERS[train_config.optimizer]
    shuffle_rng = RandomStream(train_config.seed, stream_key("shuffle"))
    dropout_rng = RandomStream(train_config.seed, stream_key("dropout"))

    n = len(samples)
    history: list[float] = []
    for epoch in range(1, train_config.epochs + 1):
        order = shuffle_rng.permutation(n) if train_config.shuffle else np.arange(n)
        total = 0.0
        for number, window in enumerate(batch_slices(n, train_config.batch_size), start=1):
            batch = [samples[i] for i in order[window]]
            leaves = params.as_tensors(requires_grad=True)
            loss = batch_loss(leaves, model_config, loss_config, batch, dropout_rng)
            value = loss.item()
            if not math.isfinite(value):
                raise NonFiniteLossError(f"non-finite loss at epoch {epoch}, batch {number}")
            grads = backward(GradientRecord(loss, leaves))
            params = step(params, grads, train_config.learning_rate)
            total += value * len(batch)

        history.append(total / n)
        logger.debug("epoch %d mean loss %.6f", epoch, history[-1])
        if should_stop(history, train_config):
            logger.info("early stop after epoch %d (mean loss %.6f)", epoch, history[-1])
            break
    return params, history
