"""Process configuration using Pydantic Settings."""

from functools import lru_cache
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings read from the environment.

    Every field can be set through a ``BOXTRACK_``-prefixed environment
    variable (``BOXTRACK_LOG=DEBUG``) or a local ``.env`` file.
    """

    # Application settings
    app_name: str = Field(default="boxtrack", description="Program name")
    app_version: str = Field(
        default="1.0.0", description="Program version"
    )
    debug: bool = Field(default=False, description="Debug mode")

    # Logging settings
    log: str = Field(
        default="INFO",
        description="Log level name (DEBUG, INFO, WARNING, ERROR)",
    )
    log_file: Optional[str] = Field(
        default=None,
        description="Optional path of a rotating log file",
    )

    # Document settings
    schema_version: str = Field(
        default="boxtrack9/1",
        description="Schema tag written into every JSON document",
    )

    model_config = SettingsConfigDict(
        env_prefix="BOXTRACK_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
    )


@lru_cache()
def get_settings() -> Settings:
    """Get cached process settings."""
    return Settings()
