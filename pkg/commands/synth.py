import argparse
import json
import logging
from pathlib import Path

from pydantic import ValidationError

from commands.common import add_seed_flag, echo
from core.errors import ConfigError
from models.schemas import SynthSpec
from services.dataset_io import save_dataset
from services.synthetic import generate_synthetic

logger = logging.getLogger(__name__)


def load_spec(path: Path | None, seed: int) -> SynthSpec:
    values = {}
    if path is not None:
        try:
            values = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read synthetic spec {path}: {e.strerror}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})")
    try:
        return SynthSpec.model_validate({**values, "seed": seed})
    except ValidationError as e:
        raise ConfigError(f"invalid synthetic spec: {e.errors()[0]['msg']}")


def run(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec, args.seed)
    echo(spec=spec.model_dump_json())
    manifest_path = Path(args.out)
    if manifest_path.suffix != ".csv":
        manifest_path = manifest_path / "manifest.csv"
    manifest, matrices = generate_synthetic(spec, manifest_path.parent)
    save_dataset(manifest_path, manifest, matrices)
    print(f"manifest = {manifest_path}")
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("synth", help="generate a seeded synthetic connectivity dataset")
    parser.add_argument("--out", type=Path, required=True,
                        help="output directory, or the manifest .csv path")
    parser.add_argument("--spec", type=Path, help="JSON synthetic spec (defaults apply when omitted)")
    add_seed_flag(parser)
    parser.set_defaults(handler=run)
