from pathlib import Path
from typing import Mapping

from pydantic import BaseModel, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from core.errors import ConfigError
from models.schemas import LossConfig, ModelConfig, TrainConfig


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="MKCAPS_", env_file=".env", extra="ignore")

    log_level: str = "INFO"
    jobs: int = 1                  # parallel cross-validation folds
    float_format: str = "%.17g"    # CSV float formatting, exact round-trip


settings = Settings()


# ── Flat key = value files ───────────────────────────────────────────────────

def parse_flat(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse `key = value` lines; `#` starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: missing key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        values[key] = value
    return values


def read_flat(path: Path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}")
    return parse_flat(text, source=str(path))


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    if hasattr(value, "value"):          # enums
        return str(value.value)
    return str(value)


def dump_flat(values: Mapping[str, object]) -> str:
    return "".join(f"{key} = {_format_value(value)}\n" for key, value in values.items())


def model_to_flat(model: BaseModel) -> dict[str, object]:
    return model.model_dump(by_alias=True)


# ── Routing flat keys into the three config models ───────────────────────────

CONFIG_MODELS: tuple[type[BaseModel], ...] = (ModelConfig, TrainConfig, LossConfig)


def _keys_of(model: type[BaseModel]) -> set[str]:
    return {field.alias or name for name, field in model.model_fields.items()}


def build_model(model: type[BaseModel], values: Mapping[str, object]):
    try:
        return model.model_validate(dict(values))
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or model.__name__}: {err['msg']}"
            for err in e.errors()
        )
        raise ConfigError(f"invalid {model.__name__}: {problems}")


def resolve_configs(
    file_values: Mapping[str, str] | None = None,
    overrides: Mapping[str, str] | None = None,
) -> tuple[ModelConfig, TrainConfig, LossConfig]:
    """Merge built-in defaults, config file values and command-line overrides."""
    merged = {**(file_values or {}), **(overrides or {})}
    routed: dict[type[BaseModel], dict[str, str]] = {model: {} for model in CONFIG_MODELS}
    for key, value in merged.items():
        owner = next((m for m in CONFIG_MODELS if key in _keys_of(m)), None)
        if owner is None:
            raise ConfigError(f"unknown config key '{key}'")
        routed[owner][key] = value
    return tuple(build_model(model, routed[model]) for model in CONFIG_MODELS)


def parse_overrides(pairs: list[str] | None) -> dict[str, str]:
    """`--set key=value` flags."""
    values: dict[str, str] = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got '{pair}'")
        key, value = (part.strip() for part in pair.split("=", 1))
        values[key] = value
    return values
