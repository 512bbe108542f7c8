"""
Process settings, logging setup and study configuration files.

Settings come from environment variables (a .env file is loaded first).
Study configurations are flat "key = value" files whose values are
parsed as YAML scalars or flow lists and validated with pydantic.
"""
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, TypeVar

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError, ParseError

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'
LOG_FILE_NAME = "eegforward.log"
DEFAULT_UPLOAD_MAX_BYTES = 50 * 1024 * 1024
UVICORN_LOGGERS = ("uvicorn", "uvicorn.access", "uvicorn.error")


@dataclass(frozen=True)
class Settings:
    """Process-wide settings read from the environment."""
    log_dir: str = "logs"
    log_level: str = "INFO"
    mesh_dir: str = "meshes"
    upload_max_bytes: int = DEFAULT_UPLOAD_MAX_BYTES


def load_settings(env: dict[str, str] | None = None) -> Settings:
    """
    Build Settings from the environment.

    Args:
        env: Mapping to read instead of os.environ (the .env file is only
            loaded when reading the real environment)

    Raises:
        ConfigError: if UPLOAD_MAX_BYTES is not a positive integer
    """
    if env is None:
        load_dotenv()
        env = dict(os.environ)
    raw_max = env.get("UPLOAD_MAX_BYTES", str(DEFAULT_UPLOAD_MAX_BYTES))
    try:
        upload_max = int(raw_max)
    except ValueError:
        raise ConfigError(f"UPLOAD_MAX_BYTES must be an integer, got '{raw_max}'")
    if upload_max <= 0:
        raise ConfigError(f"UPLOAD_MAX_BYTES must be positive, got {upload_max}")
    return Settings(
        log_dir=env.get("LOG_DIR", "logs"),
        log_level=env.get("LOG_LEVEL", "INFO").upper(),
        mesh_dir=env.get("MESH_DIR", "meshes"),
        upload_max_bytes=upload_max,
    )


def configure_logging(settings: Settings | None = None) -> Path:
    """
    Send log records to the console and to LOG_DIR/eegforward.log.

    Uvicorn loggers share the same handlers. Calling this again replaces
    the handlers installed by the previous call.

    Returns:
        Path of the log file
    """
    settings = settings or load_settings()
    os.makedirs(settings.log_dir, exist_ok=True)
    level = getattr(logging, settings.log_level, None)
    if not isinstance(level, int):
        level = logging.INFO

    formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT)
    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    for handler in list(root_logger.handlers):
        if getattr(handler, "_eegforward", False):
            root_logger.removeHandler(handler)
            handler.close()

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    log_file = Path(settings.log_dir) / LOG_FILE_NAME
    file_handler = logging.FileHandler(log_file, encoding='utf-8')
    file_handler.setFormatter(formatter)
    for handler in (console_handler, file_handler):
        handler._eegforward = True
        root_logger.addHandler(handler)

    for name in UVICORN_LOGGERS:
        logging.getLogger(name).handlers = [console_handler, file_handler]

    logger.info(f"Logging initialized. Log file: {log_file}")
    return log_file


def parse_key_value(text: str) -> dict:
    """
    Parse a flat "key = value" file.

    Blank lines and '#' comments are skipped; values go through
    yaml.safe_load, so "[1, 2]" is a list and "3" an int.

    Raises:
        ParseError: on a missing '=', an empty key, a duplicate key or an
            unparsable value (with the 1-based line number)

    Examples:
        >>> parse_key_value("level = 2\\nradii = [0.09, 0.08]  # m\\n")
        {'level': 2, 'radii': [0.09, 0.08]}
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ParseError(f"Expected 'key = value', got '{content}'", line=lineno)
        key, value = (part.strip() for part in content.split("=", 1))
        if not key:
            raise ParseError("Empty key", line=lineno)
        if key in values:
            raise ParseError(f"Duplicate key '{key}'", line=lineno)
        try:
            values[key] = yaml.safe_load(value) if value else None
        except yaml.YAMLError as e:
            raise ParseError(f"Invalid value for '{key}': {e}", line=lineno) from e
    return values


METHOD_NAMES = ("as", "fs2", "fs4", "fs6")


class SphereStudyConfig(BaseModel):
    """Forward accuracy on a layered sphere against the series reference."""
    model_config = ConfigDict(extra="forbid")

    radii: list[float] = Field(default=[0.092, 0.086, 0.080, 0.078], min_length=1)
    conductivities: list[float] = Field(default=[0.33, 0.01, 1.79, 0.33], min_length=1)
    level: int = Field(default=3, ge=0, le=5)
    shells_per_layer: int = Field(default=4, ge=1, le=8)
    distances: list[float] = Field(default=[0.002, 0.004, 0.008], min_length=1)
    dipoles: int = Field(default=20, ge=1)
    orientation: Literal["radial", "tangential", "random"] = "tangential"
    methods: list[str] = Field(default=["as", "fs2", "fs4"], min_length=1)
    moment: float = Field(default=1e-8, gt=0)
    seed: int = 0
    tol: float = Field(default=1e-10, gt=0, lt=1)

    @field_validator("radii", "conductivities", "distances")
    @classmethod
    def _positive(cls, values: list[float]) -> list[float]:
        if any(v <= 0 for v in values):
            raise ValueError("all values must be positive")
        return values

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, values: list[str]) -> list[str]:
        values = [v.lower() for v in values]
        unknown = [v for v in values if v not in METHOD_NAMES]
        if unknown:
            raise ValueError(f"unknown method(s) {unknown}; expected {list(METHOD_NAMES)}")
        return values

    @model_validator(mode="after")
    def _layers_match(self):
        if len(self.radii) != len(self.conductivities):
            raise ValueError("radii and conductivities must have the same length")
        if any(d >= self.radii[-1] for d in self.distances):
            raise ValueError("distances must be smaller than the innermost radius")
        return self


class DrefStudyConfig(BaseModel):
    """FS-vs-AS differences as a function of d/a on layered spheres."""
    model_config = ConfigDict(extra="forbid")

    radii: list[float] = Field(default=[0.092, 0.078], min_length=2)
    conductivities: list[float] = Field(default=[1.79, 0.33], min_length=2)
    levels: list[int] = Field(default=[2, 3], min_length=1)
    shells_per_layer: int = Field(default=1, ge=1, le=8)
    anisotropy: dict[int, tuple[float, float]] | None = None
    orders: list[int] = Field(default=[2, 4], min_length=1)
    distances: list[float] = Field(default=[0.001, 0.002, 0.004, 0.008, 0.016], min_length=1)
    dipoles: int = Field(default=2, ge=1)
    orientation: Literal["radial", "tangential", "random"] = "tangential"
    moment: float = Field(default=1e-8, gt=0)
    seed: int = 0
    tol: float = Field(default=1e-10, gt=0, lt=1)

    @field_validator("radii", "conductivities", "distances")
    @classmethod
    def _positive(cls, values: list[float]) -> list[float]:
        if any(v <= 0 for v in values):
            raise ValueError("all values must be positive")
        return values

    @field_validator("orders")
    @classmethod
    def _supported_orders(cls, values: list[int]) -> list[int]:
        if any(v not in (2, 4, 6) for v in values):
            raise ValueError("orders must be 2, 4 or 6")
        return values

    @field_validator("levels")
    @classmethod
    def _levels(cls, values: list[int]) -> list[int]:
        if any(v < 0 or v > 5 for v in values):
            raise ValueError("levels must be between 0 and 5")
        return values

    @model_validator(mode="after")
    def _layers_match(self):
        if len(self.radii) != len(self.conductivities):
            raise ValueError("radii and conductivities must have the same length")
        if any(d >= self.radii[-1] for d in self.distances):
            raise ValueError("distances must be smaller than the innermost radius")
        for layer, sigmas in (self.anisotropy or {}).items():
            if not 1 <= layer < len(self.radii):
                raise ValueError(
                    f"anisotropic layer {layer} must be in 1..{len(self.radii) - 1}; the source layer stays isotropic"
                )
            if any(s <= 0 for s in sigmas):
                raise ValueError(f"anisotropic conductivities of layer {layer} must be positive")
        return self


StudyConfig = TypeVar("StudyConfig", bound=BaseModel)


def validate_config(values: dict, model: type[StudyConfig]) -> StudyConfig:
    """Validate a parsed mapping, turning pydantic errors into ConfigError."""
    try:
        return model.model_validate(values)
    except ValidationError as e:
        fields = ", ".join(".".join(str(p) for p in err["loc"]) or "<root>" for err in e.errors())
        raise ConfigError(f"Invalid {model.__name__} ({fields}): {e}") from e


def load_study_config(path, model: type[StudyConfig]) -> StudyConfig:
    """Read and validate a key=value study file."""
    path = Path(path)
    config = validate_config(parse_key_value(path.read_text(encoding="utf-8")), model)
    logger.info(f"Loaded {model.__name__} from {path}")
    return config
