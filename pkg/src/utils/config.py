"""
Configuration management for the ion-trap simulator.

Key goals:
- Load process-level settings from environment variables with optional .env support
- Validate with Pydantic Settings, providing clear errors and safe defaults
- Avoid side effects at import time; provide explicit lazy-loading
- Keep experiment parameters out of here: those live in the run config file
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, Optional

from pydantic import Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """
    Application settings loaded from environment variables.

    Environment variable prefix: IONTRAP_
    Dotenv file: .env (UTF-8)
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        env_prefix="IONTRAP_",
        extra="ignore",
        validate_default=True,
    )

    # Physics inputs
    constants_path: Optional[Path] = Field(
        default=None,
        description="Atomic constants file; the packaged file is used when unset",
        alias="IONTRAP_CONSTANTS",
    )

    # Run defaults
    output_dir: Path = Field(
        default=Path("./results"),
        description="Directory for CSV, plot descriptor and manifest files",
        alias="IONTRAP_OUTPUT_DIR",
    )
    default_seed: int = Field(
        default=0,
        description="Monte Carlo seed used when neither config nor CLI sets one",
        alias="IONTRAP_DEFAULT_SEED",
        ge=0,
    )

    # Application Settings
    log_level: str = Field(
        default="INFO",
        description="Logging level",
        alias="IONTRAP_LOG_LEVEL",
    )
    log_file: Optional[Path] = Field(
        default=None,
        description="Optional log file in addition to the console",
        alias="IONTRAP_LOG_FILE",
    )

    # Display Settings
    use_colors: bool = Field(
        default=True,
        description="Enable colored terminal output",
        alias="IONTRAP_USE_COLORS",
    )
    show_progress: bool = Field(
        default=True,
        description="Show progress indicators",
        alias="IONTRAP_SHOW_PROGRESS",
    )

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level."""
        valid_levels = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
        value = v.strip().upper()
        if value not in valid_levels:
            raise ValueError(f"log_level must be one of {sorted(valid_levels)}")
        return value

    @field_validator("constants_path")
    @classmethod
    def validate_constants_path(cls, v: Optional[Path]) -> Optional[Path]:
        """The override must point at an existing file."""
        if v is None:
            return None
        path = Path(v).expanduser()
        if not path.is_file():
            raise ValueError(f"constants file not found: {path}")
        return path

    def safe_debug_dict(self) -> Dict[str, str]:
        """JSON-serializable view for debug logs."""
        return {
            "constants_path": str(self.constants_path or "<packaged>"),
            "output_dir": str(self.output_dir),
            "default_seed": str(self.default_seed),
            "log_level": self.log_level,
            "log_file": str(self.log_file or ""),
            "use_colors": str(self.use_colors),
            "show_progress": str(self.show_progress),
        }


_settings: Optional[Settings] = None


def _build_settings() -> Settings:
    """Construct Settings, logging validation failures."""
    try:
        s = Settings()
    except ValidationError as e:
        logger.error(
            "Failed to validate configuration: %s", json.dumps(e.errors(), default=str)
        )
        raise
    else:
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("Loaded configuration: %s", s.safe_debug_dict())
        return s


def get_settings() -> Settings:
    """
    Get application settings singleton.

    Returns:
        Settings: instance with validated configuration.

    Raises:
        ValidationError: If settings are invalid.
    """
    global _settings
    if _settings is None:
        _settings = _build_settings()
    return _settings


def reload_settings() -> Settings:
    """
    Force reload settings from environment.

    Useful for testing or when environment variables change during runtime.
    Constants already loaded from a previous path stay cached under that path.
    """
    global _settings
    _settings = _build_settings()
    return _settings
