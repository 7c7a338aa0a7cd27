import argparse
import logging
from pathlib import Path

from commands.common import add_config_flags, add_seed_flag, echo, resolve
from core.config import settings
from core.files import atomic_write_text
from services.checkpoint import save_checkpoint
from services.dataset_io import load_dataset
from services.evaluation import cross_validate, report_lines

logger = logging.getLogger(__name__)


def run(args: argparse.Namespace) -> int:
    _, samples = load_dataset(args.data)
    model_config, train_config, loss_config = resolve(args, samples)
    jobs = args.jobs or settings.jobs
    echo(model_config, train_config, loss_config, folds=args.folds)

    on_fold = None
    if args.checkpoint_dir is not None:
        def on_fold(fold, artifacts):
            params, history = artifacts
            path = args.checkpoint_dir / f"fold_{fold:02d}.ckpt"
            save_checkpoint(path, params, model_config, history)
            logger.info("wrote %s", path)

    result = cross_validate(samples, model_config, train_config, loss_config, args.folds, args.seed,
                            jobs=jobs, on_fold=on_fold)
    report = "".join(f"{line}\n" for line in report_lines(result))
    print(report, end="")
    if args.out is not None:
        atomic_write_text(args.out, report)
        logger.info("wrote metrics to %s", args.out)
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("crossval", help="stratified k-fold cross-validation of MKCapsnet")
    parser.add_argument("--data", type=Path, required=True, help="dataset manifest (path,label CSV)")
    parser.add_argument("--folds", type=int, default=10, help="number of folds (default 10)")
    parser.add_argument("--jobs", type=int, default=None, help="folds trained in parallel (default MKCAPS_JOBS or 1)")
    parser.add_argument("--out", type=Path, help="also write the metrics dump to this file")
    parser.add_argument("--checkpoint-dir", type=Path, help="write one checkpoint per fold here")
    add_config_flags(parser)
    add_seed_flag(parser)
    parser.set_defaults(handler=run)
