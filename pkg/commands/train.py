import argparse
import logging
from pathlib import Path

from commands.common import add_config_flags, add_seed_flag, echo, resolve
from services.checkpoint import save_checkpoint
from services.dataset_io import load_dataset
from services.training import fit

logger = logging.getLogger(__name__)


def run(args: argparse.Namespace) -> int:
    _, samples = load_dataset(args.data)
    model_config, train_config, loss_config = resolve(args, samples)
    echo(model_config, train_config, loss_config)

    params, history = fit(samples, model_config, train_config, loss_config)
    save_checkpoint(args.out_checkpoint, params, model_config, history)
    logger.info("wrote checkpoint %s after %d epochs", args.out_checkpoint, len(history))
    print(f"epochs_run = {len(history)}")
    print(f"final_loss = {history[-1]!r}")
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="fit MKCapsnet on a whole dataset and save a checkpoint")
    parser.add_argument("--data", type=Path, required=True, help="dataset manifest (path,label CSV)")
    parser.add_argument("--out-checkpoint", type=Path, required=True, help="checkpoint file to write")
    add_config_flags(parser)
    add_seed_flag(parser)
    parser.set_defaults(handler=run)
