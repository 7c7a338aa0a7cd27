import argparse
from pathlib import Path

from commands.common import add_config_flags, add_seed_flag, echo, resolve
from core.config import settings
from services.ablation import load_grid, run_ablation, save_ablation
from services.dataset_io import load_dataset


def run(args: argparse.Namespace) -> int:
    _, samples = load_dataset(args.data)
    model_config, train_config, loss_config = resolve(args, samples)
    grid = load_grid(args.grid)
    echo(model_config, train_config, loss_config, folds=args.folds, cells=len(grid.cells))

    table = run_ablation(samples, grid, model_config, train_config, loss_config, args.folds, args.seed,
                         jobs=args.jobs or settings.jobs)
    save_ablation(args.out, table)
    print(table.to_csv(index=False, lineterminator="\n"), end="")
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("ablation", help="cross-validate every cell of a structure grid")
    parser.add_argument("--data", type=Path, required=True, help="dataset manifest (path,label CSV)")
    parser.add_argument("--grid", type=Path, help="JSON grid {\"cells\": [...]} (default: the eight-cell grid)")
    parser.add_argument("--out", type=Path, required=True, help="results CSV to write")
    parser.add_argument("--folds", type=int, default=10, help="number of folds (default 10)")
    parser.add_argument("--jobs", type=int, default=None, help="folds trained in parallel (default MKCAPS_JOBS or 1)")
    add_config_flags(parser)
    add_seed_flag(parser)
    parser.set_defaults(handler=run)
