"""
Exception handling at the command-line boundary.

Every subcommand runs inside ``command_boundary``, which gives the
invocation a run id, logs its start and end, and converts exceptions
into a one-line message on stderr plus the process exit code.
"""

import argparse
import functools
import sys
import time
import traceback
import uuid
from typing import Any, Callable, Dict

from pydantic import ValidationError

from .config import get_settings
from .exceptions import (
    EXIT_OK,
    EXIT_RUNTIME,
    BoxTrackException,
    ConfigurationException,
)
from .logging_config import (
    get_logger,
    log_command_end,
    log_command_start,
    log_error,
)

logger = get_logger(__name__)

CommandFunc = Callable[[argparse.Namespace], None]


def validation_field_errors(
    exc: ValidationError, prefix: str = ""
) -> Dict[str, str]:
    """
    Map each validation error to its dotted key path.

    Args:
        exc: Pydantic validation error
        prefix: Path prepended to every key

    Returns:
        Dictionary of ``key.path`` to error message
    """
    field_errors = {}
    for error in exc.errors():
        path = ".".join(str(loc) for loc in error["loc"])
        if prefix:
            path = f"{prefix}.{path}" if path else prefix
        field_errors[path] = error["msg"]
    return field_errors


def configuration_error(exc: ValidationError) -> ConfigurationException:
    """Convert a pydantic validation error on a run configuration."""
    field_errors = validation_field_errors(exc)
    keys = ", ".join(sorted(field_errors))
    return ConfigurationException(
        message=f"Invalid configuration: {keys}",
        field_errors=field_errors,
    )


def format_error(command: str, exc: BoxTrackException) -> str:
    """
    Format the stderr line for a failed command.

    In debug mode the exception details are appended.
    """
    message = f"boxtrack {command}: {exc.error_code}: {exc.message}"
    if get_settings().debug and exc.details:
        message = f"{message} {exc.details}"
    return message


def handle_boxtrack_exception(
    command: str, exc: BoxTrackException, run_id: str
) -> int:
    """
    Report a BoxTrackException and return its exit code.

    Args:
        command: Subcommand name
        exc: BoxTrackException instance
        run_id: Unique invocation identifier

    Returns:
        The exception's exit code
    """
    log_error(
        exc,
        run_id=run_id,
        context={"command": command, "error_code": exc.error_code},
    )
    print(format_error(command, exc), file=sys.stderr)
    return exc.exit_code


def handle_unexpected_exception(
    command: str, exc: Exception, run_id: str
) -> int:
    """
    Report an unhandled exception as a runtime failure.

    Args:
        command: Subcommand name
        exc: Exception instance
        run_id: Unique invocation identifier

    Returns:
        The runtime failure exit code
    """
    stack_trace = traceback.format_exc()
    log_error(
        exc,
        run_id=run_id,
        context={
            "command": command,
            "stack_trace": stack_trace,
            "exception_type": type(exc).__name__,
        },
    )

    # Do not expose internals unless debugging
    message = "An unexpected error occurred"
    if get_settings().debug:
        message = f"Internal error: {type(exc).__name__}: {exc}"
    print(f"boxtrack {command}: {message}", file=sys.stderr)
    return EXIT_RUNTIME


def _loggable_arguments(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        key: value
        for key, value in vars(args).items()
        if not callable(value)
    }


def command_boundary(
    command: str,
) -> Callable[[CommandFunc], Callable[[argparse.Namespace], int]]:
    """
    Decorate a subcommand so that it returns a process exit code.

    Args:
        command: Subcommand name used in logs and messages
    """

    def decorator(func: CommandFunc) -> Callable[[argparse.Namespace], int]:
        @functools.wraps(func)
        def wrapper(args: argparse.Namespace) -> int:
            run_id = str(uuid.uuid4())
            start_time = time.time()
            log_command_start(run_id, command, _loggable_arguments(args))

            try:
                func(args)
                exit_code = EXIT_OK
            except BoxTrackException as exc:
                exit_code = handle_boxtrack_exception(command, exc, run_id)
            except ValidationError as exc:
                exit_code = handle_boxtrack_exception(
                    command, configuration_error(exc), run_id
                )
            except Exception as exc:
                exit_code = handle_unexpected_exception(command, exc, run_id)

            duration_ms = (time.time() - start_time) * 1000
            log_command_end(run_id, exit_code, duration_ms)
            return exit_code

        return wrapper

    return decorator
