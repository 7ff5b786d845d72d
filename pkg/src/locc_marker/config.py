"""Configuration models using Pydantic v2."""

from __future__ import annotations

import os
from enum import Enum
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)

CONFIG_ENV_VAR = "LOCC_MARKER_CONFIG"


class LogLevel(str, Enum):
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"


class OutputFormat(str, Enum):
    TEXT = "text"
    JSON = "json"


class ToleranceConfig(BaseModel):
    """Numerical thresholds for rank, orthogonality and identity checks."""

    model_config = ConfigDict(frozen=True)

    rank_rel_tol: float = 1e-9  # relative to the largest singular value
    orth_tol: float = 1e-9
    identity_tol: float = 1e-12

    @field_validator("rank_rel_tol", "orth_tol", "identity_tol")
    @classmethod
    def check_bounds(cls, v: float) -> float:
        """Tolerances must lie strictly between 0 and 1e-3."""
        if not 0.0 < v < 1e-3:
            raise ValueError(f"tolerance {v} outside (0, 1e-3)")
        return v


DEFAULT_TOLERANCES = ToleranceConfig()


class RunConfig(BaseSettings):
    """Run configuration for the CLI and the claim registry.

    Environment variables with the ``LOCC_MARKER_`` prefix take precedence
    over values read from a configuration file.
    """

    model_config = SettingsConfigDict(env_prefix="LOCC_MARKER_", extra="ignore")

    log_level: LogLevel = LogLevel.INFO
    seed: int = 42
    restarts: int = Field(default=1000, ge=1)
    max_iterations: int = Field(default=200, ge=1)
    branch_cap: int = Field(default=2**20, ge=1)
    output_format: OutputFormat = OutputFormat.TEXT
    max_concurrency: int = Field(default=4, ge=1)
    tolerances: ToleranceConfig = Field(default_factory=ToleranceConfig)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return env_settings, init_settings, dotenv_settings, file_secret_settings


def load_run_config(config_path: str | Path | None = None) -> RunConfig:
    """Load run configuration from a YAML file.

    Args:
        config_path: Path to config file. If None, uses the LOCC_MARKER_CONFIG
                    env var, or pure defaults when that is unset too

    Returns:
        Validated RunConfig object
    """
    if config_path is None:
        config_path = os.environ.get(CONFIG_ENV_VAR)
        if not config_path:
            return RunConfig()

    path = Path(config_path)
    if not path.exists():
        raise FileNotFoundError(f"Configuration file not found: {path}")

    with open(path) as f:
        data = yaml.safe_load(f)

    return RunConfig(**(data or {}))
