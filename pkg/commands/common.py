"""Flags and helpers shared by the subcommands."""

import argparse
import logging
from pathlib import Path
from typing import Sequence

from core.config import dump_flat, model_to_flat, parse_overrides, read_flat, resolve_configs
from core.errors import DimensionError
from models.matrices import ConnectivityMatrix
from models.schemas import LossConfig, ModelConfig, TrainConfig

logger = logging.getLogger(__name__)


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat `key = value` config file")
    parser.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE", default=[],
                        help="override one config key (repeatable)")


def add_seed_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, required=True, help="master seed")


def dataset_rois(samples: Sequence[ConnectivityMatrix]) -> int:
    sizes = sorted({sample.n for sample in samples})
    if len(sizes) != 1:
        raise DimensionError(f"dataset mixes matrix sizes {sizes}")
    return sizes[0]


def resolve(args: argparse.Namespace, samples: Sequence[ConnectivityMatrix] | None = None
            ) -> tuple[ModelConfig, TrainConfig, LossConfig]:
    """
    Defaults < config file < --set < dedicated flags. When no source names
    `n_rois`, it is taken from the dataset.
    """
    file_values = read_flat(args.config) if getattr(args, "config", None) else {}
    overrides = parse_overrides(getattr(args, "overrides", None))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    if samples and "n_rois" not in file_values and "n_rois" not in overrides:
        overrides["n_rois"] = str(dataset_rois(samples))

    model_config, train_config, loss_config = resolve_configs(file_values, overrides)
    if samples and dataset_rois(samples) != model_config.n_rois:
        raise DimensionError(
            f"config n_rois={model_config.n_rois} but the dataset has {dataset_rois(samples)}x"
            f"{dataset_rois(samples)} matrices"
        )
    return model_config, train_config, loss_config


def echo(*configs, **extra) -> None:
    """Resolved configuration on stdout."""
    values: dict[str, object] = {}
    for config in configs:
        values.update(model_to_flat(config))
    values.update(extra)
    text = dump_flat(values)
    print(text, end="")
    logger.debug("resolved configuration:\n%s", text)
