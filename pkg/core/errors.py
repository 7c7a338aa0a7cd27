"""
Exception hierarchy shared by every service.

Each class carries the process exit code the CLI reports for it:
  1: usage / configuration
  2: data (files, shapes, degenerate inputs, checkpoints)
  3: numeric failure (non-finite loss, broken internal contracts)
"""


class MKCapsError(Exception):
    exit_code = 2

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# ── Usage / configuration (exit 1) ───────────────────────────────────────────

class ConfigError(MKCapsError):
    exit_code = 1


class UsageError(ConfigError):
    pass


# ── Data (exit 2) ────────────────────────────────────────────────────────────

class DataError(MKCapsError):
    exit_code = 2


class DimensionError(DataError):
    pass


class DegenerateInputError(DataError):
    pass


class DomainError(DataError):
    pass


class ParseError(DataError):
    pass


class StratificationError(DataError):
    pass


class EmptySpecError(DataError):
    pass


class CheckpointError(DataError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass


# ── Numeric (exit 3) ─────────────────────────────────────────────────────────

class NumericError(MKCapsError):
    exit_code = 3


class NonFiniteLossError(NumericError):
    pass


class GradientProbeError(NumericError):
    pass


class ContractError(NumericError):
    pass


class FoldError(MKCapsError):
    """Wraps a failure inside one cross-validation fold, keeping its exit code."""

    def __init__(self, fold: int, cause: MKCapsError):
        super().__init__(f"fold {fold}: {cause.detail}")
        self.fold = fold
        self.cause = cause
        self.exit_code = cause.exit_code

    def __reduce__(self):
        return FoldError, (self.fold, self.cause)
