"""
Logging configuration for boxtrack.

This module provides structured logging configuration with formatters,
handlers and log levels, plus helpers that attach structured ``extra``
data to command, pipeline and error records.
"""

import logging
import logging.config
import os
import sys
from typing import Any, Dict, Optional

from .config import get_settings

_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def resolve_log_level(verbose: bool = False) -> str:
    """
    Resolve the effective log level name.

    Args:
        verbose: Whether ``--verbose`` was given on the command line

    Returns:
        Log level name understood by ``logging``
    """
    settings = get_settings()
    if verbose or settings.debug:
        return "DEBUG"
    level = settings.log.upper()
    return level if level in _LEVELS else "INFO"


def get_logging_config(verbose: bool = False) -> Dict[str, Any]:
    """
    Get logging configuration based on environment settings.

    Args:
        verbose: Force debug output

    Returns:
        Dictionary containing logging configuration
    """
    settings = get_settings()
    log_level = resolve_log_level(verbose)

    log_format = (
        "%(asctime)s - %(name)s - %(levelname)s - "
        "%(funcName)s:%(lineno)d - %(message)s"
    )

    # JSON format for structured logging (useful for batch runs)
    json_format = (
        '{"timestamp": "%(asctime)s", "logger": "%(name)s", '
        '"level": "%(levelname)s", "function": "%(funcName)s", '
        '"line": %(lineno)d, "message": "%(message)s"}'
    )

    handlers: Dict[str, Any] = {
        "console": {
            "class": "logging.StreamHandler",
            "level": log_level,
            "formatter": "standard",
            "stream": sys.stderr,
        },
    }
    package_handlers = ["console"]

    if settings.log_file:
        handlers["file"] = {
            "class": "logging.handlers.RotatingFileHandler",
            "level": log_level,
            "formatter": "detailed",
            "filename": settings.log_file,
            "maxBytes": 10485760,  # 10MB
            "backupCount": 5,
        }
        package_handlers.append("file")

    config = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "standard": {
                "format": log_format,
                "datefmt": "%Y-%m-%d %H:%M:%S",
            },
            "json": {
                "format": json_format,
                "datefmt": "%Y-%m-%d %H:%M:%S",
            },
            "detailed": {
                "format": (
                    "%(asctime)s - %(name)s - %(levelname)s - "
                    "%(pathname)s:%(lineno)d - %(funcName)s() - %(message)s"
                ),
                "datefmt": "%Y-%m-%d %H:%M:%S",
            },
        },
        "handlers": handlers,
        "loggers": {
            "": {  # Root logger
                "handlers": ["console"],
                "level": "WARNING",
                "propagate": False,
            },
            "boxtrack": {
                "handlers": package_handlers,
                "level": log_level,
                "propagate": False,
            },
            "boxtrack.errors": {
                "handlers": package_handlers,
                "level": "ERROR",
                "propagate": False,
            },
        },
    }

    return config


def setup_logging(verbose: bool = False) -> None:
    """Set up logging for a command invocation."""
    settings = get_settings()
    if settings.log_file:
        directory = os.path.dirname(settings.log_file)
        if directory:
            os.makedirs(directory, exist_ok=True)

    logging.config.dictConfig(get_logging_config(verbose))

    logger = logging.getLogger("boxtrack")
    logger.debug("Logging configuration initialized")


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance with the specified name.

    Names outside the package (``src.boxtrack.x`` when imported from the
    test tree) are folded under the ``boxtrack`` logger.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Configured logger instance
    """
    if name.startswith("src."):
        name = name[len("src."):]
    return logging.getLogger(name)


def log_command_start(
    run_id: str, command: str, arguments: Optional[Dict[str, Any]] = None
) -> None:
    """
    Log the start of a CLI command with structured data.

    Args:
        run_id: Unique invocation identifier
        command: Subcommand name
        arguments: Parsed command-line arguments
    """
    logger = get_logger("boxtrack.commands")

    extra_data: Dict[str, Any] = {
        "run_id": run_id,
        "command": command,
    }

    if arguments:
        extra_data["arguments"] = arguments

    logger.info(f"Command: {command}", extra=extra_data)


def log_command_end(run_id: str, exit_code: int, duration_ms: float) -> None:
    """
    Log the end of a CLI command with structured data.

    Args:
        run_id: Unique invocation identifier
        exit_code: Process exit code
        duration_ms: Command duration in milliseconds
    """
    logger = get_logger("boxtrack.commands")

    logger.info(
        f"Exit: {exit_code} ({duration_ms:.2f}ms)",
        extra={
            "run_id": run_id,
            "exit_code": exit_code,
            "duration_ms": duration_ms,
        },
    )


def log_error(
    error: Exception,
    run_id: Optional[str] = None,
    context: Optional[Dict[str, Any]] = None,
) -> None:
    """
    Log error information with structured data.

    Args:
        error: Exception that occurred
        run_id: Unique invocation identifier
        context: Additional context information
    """
    logger = get_logger("boxtrack.errors")

    extra_data = {
        "error_type": type(error).__name__,
        "error_message": str(error),
    }

    if run_id:
        extra_data["run_id"] = run_id

    if context:
        extra_data.update(context)

    logger.error(
        f"Error occurred: {type(error).__name__}: {str(error)}",
        extra=extra_data,
        exc_info=True,
    )


def log_pipeline_event(
    event_type: str, details: Dict[str, Any], frame_id: Optional[int] = None
) -> None:
    """
    Log tracking pipeline events with structured data.

    Args:
        event_type: Type of event (``track_created``, ``track_lost``, ...)
        details: Event details
        frame_id: Frame at which the event happened
    """
    logger = get_logger("boxtrack.pipeline")

    extra_data: Dict[str, Any] = {
        "event_type": event_type,
        "details": details,
    }

    if frame_id is not None:
        extra_data["frame_id"] = frame_id

    logger.debug(f"Pipeline event: {event_type}", extra=extra_data)
