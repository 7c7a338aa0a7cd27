import argparse
from pathlib import Path

from commands.common import add_seed_flag, echo
from models.schemas import BaselineMethod
from services.baselines import DEFAULT_NEIGHBOURS, DEFAULT_TOP_FEATURES, cross_validate_baseline
from services.dataset_io import load_dataset
from services.evaluation import report_lines


def run(args: argparse.Namespace) -> int:
    _, samples = load_dataset(args.data)
    echo(method=args.method, top_features=args.top_features, neighbours=args.neighbours,
         folds=args.folds, seed=args.seed)
    result = cross_validate_baseline(samples, args.method, args.folds, args.seed,
                                     top_features=args.top_features, neighbours=args.neighbours)
    for line in report_lines(result):
        print(line)
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("baseline", help="cross-validate a k-NN or LDA baseline")
    parser.add_argument("--method", type=BaselineMethod, choices=list(BaselineMethod), required=True,
                        metavar="{knn,lda}", help="classifier")
    parser.add_argument("--data", type=Path, required=True, help="dataset manifest (path,label CSV)")
    parser.add_argument("--top-features", type=int, default=DEFAULT_TOP_FEATURES,
                        help=f"features kept by t-test ranking (default {DEFAULT_TOP_FEATURES})")
    parser.add_argument("--neighbours", type=int, default=DEFAULT_NEIGHBOURS,
                        help=f"k for k-NN (default {DEFAULT_NEIGHBOURS})")
    parser.add_argument("--folds", type=int, default=10, help="number of folds (default 10)")
    add_seed_flag(parser)
    parser.set_defaults(handler=run)
