"""`eval`: score a saved checkpoint on a labelled dataset."""

import argparse
import logging
from pathlib import Path

from commands.common import dataset_rois, echo
from models.schemas import ConfusionCounts
from services.capsnet import predict
from services.checkpoint import load_checkpoint
from services.dataset_io import load_dataset
from services.evaluation import compute_metrics, metrics_lines

logger = logging.getLogger(__name__)


def run(args: argparse.Namespace) -> int:
    _, samples = load_dataset(args.data)
    checkpoint = load_checkpoint(args.checkpoint, expected_n_rois=dataset_rois(samples))
    echo(checkpoint.config)

    predicted = []
    for sample in samples:
        lengths, label = predict(checkpoint.params, checkpoint.config, sample)
        logger.debug("%s: predicted %s, capsule lengths %s", sample.sample_id, label.value, lengths.tolist())
        predicted.append(label)

    confusion = ConfusionCounts.from_predictions([s.label for s in samples], predicted)
    print(f"eval.confusion=tp:{confusion.tp},fn:{confusion.fn},tn:{confusion.tn},fp:{confusion.fp}")
    for line in metrics_lines("eval", compute_metrics(confusion)):
        print(line)
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="evaluate a checkpoint on a dataset")
    parser.add_argument("--checkpoint", type=Path, required=True, help="checkpoint file")
    parser.add_argument("--data", type=Path, required=True, help="dataset manifest (path,label CSV)")
    parser.set_defaults(handler=run)
