import argparse
from pathlib import Path

from commands.common import echo
from services.checkpoint import load_checkpoint
from services.dataset_io import load_matrix
from services.trace import export_routing_trace


def run(args: argparse.Namespace) -> int:
    matrix = load_matrix(args.input)
    checkpoint = load_checkpoint(args.checkpoint, expected_n_rois=matrix.n)
    echo(checkpoint.config)
    sample_id = args.sample_id if args.sample_id is not None else args.input.name
    trace = export_routing_trace(args.out, checkpoint.params, checkpoint.config, matrix, sample_id)
    print(f"trace_rows = {len(trace)}")
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("trace", help="export routing coefficients of one matrix to CSV")
    parser.add_argument("--checkpoint", type=Path, required=True, help="checkpoint file")
    parser.add_argument("--input", type=Path, required=True, help="connectivity matrix CSV")
    parser.add_argument("--out", type=Path, required=True, help="trace CSV to write")
    parser.add_argument("--sample-id", help="sample id column value (default: input file name)")
    parser.set_defaults(handler=run)
