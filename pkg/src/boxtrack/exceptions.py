"""
Custom exceptions for boxtrack.

This module defines the exception hierarchy used by the numerical
modules, the tracking pipeline and the command-line driver. Every
exception carries an error code, a process exit code and a details
dictionary with the context needed to diagnose the failure.
"""

from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class BoxTrackException(Exception):
    """
    Base exception class for all boxtrack errors.

    This provides a consistent interface for all exceptions with error
    codes, messages, exit codes and additional context.
    """

    def __init__(
        self,
        message: str,
        error_code: str,
        exit_code: int = EXIT_RUNTIME,
        details: Optional[Dict[str, Any]] = None,
    ):
        """
        Initialize base exception.

        Args:
            message: Human-readable error message
            error_code: Unique error code for this error type
            exit_code: Process exit code used by the CLI
            details: Additional context or details about the error
        """
        self.message = message
        self.error_code = error_code
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for JSON output."""
        return {
            "error": self.error_code,
            "message": self.message,
            "details": self.details,
        }


class ConfigurationException(BoxTrackException):
    """Exception for invalid run configuration."""

    def __init__(
        self,
        message: str = "Invalid configuration",
        field_errors: Optional[Dict[str, str]] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        """
        Initialize configuration exception.

        Args:
            message: Error message
            field_errors: Dotted key path to error message
            details: Additional context
        """
        error_details = details or {}
        if field_errors:
            error_details["field_errors"] = field_errors

        super().__init__(
            message=message,
            error_code="CONFIG_ERROR",
            exit_code=EXIT_USAGE,
            details=error_details,
        )


class InputNotFoundException(BoxTrackException):
    """Exception for when an input file does not exist."""

    def __init__(self, path: str, message: Optional[str] = None):
        """
        Initialize input not found exception.

        Args:
            path: Path that could not be read
            message: Custom error message
        """
        if message is None:
            message = f"Input file {path} not found"

        super().__init__(
            message=message,
            error_code="INPUT_NOT_FOUND",
            exit_code=EXIT_USAGE,
            details={"path": path},
        )


class SchemaException(BoxTrackException):
    """Exception for documents that do not match their schema."""

    def __init__(
        self,
        document: str,
        message: str = "Document does not match its schema",
        details: Optional[Dict[str, Any]] = None,
    ):
        """
        Initialize schema exception.

        Args:
            document: Document kind (scene, poses, metrics)
            message: Error message
            details: Additional context
        """
        error_details = details or {}
        error_details["document"] = document

        super().__init__(
            message=message,
            error_code="SCHEMA_ERROR",
            exit_code=EXIT_USAGE,
            details=error_details,
        )


class DomainException(BoxTrackException):
    """Exception for arguments outside an operation's domain."""

    def __init__(
        self,
        message: str,
        index: Optional[int] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        """
        Initialize domain exception.

        Args:
            message: Error message
            index: Offending keypoint or vertex index
            details: Additional context
        """
        error_details = details or {}
        if index is not None:
            error_details["index"] = index
        self.index = index

        super().__init__(
            message=message,
            error_code="DOMAIN_ERROR",
            details=error_details,
        )


class EstimationException(BoxTrackException):
    """Exception for collapsed inputs to pose fitting."""

    def __init__(
        self,
        message: str = "Degenerate vertex set",
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(
            message=message,
            error_code="ESTIMATION_ERROR",
            details=details,
        )


class DegenerateInputException(BoxTrackException):
    """Exception for correspondence sets that do not fix a homography."""

    def __init__(
        self,
        message: str = "Degenerate correspondence configuration",
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(
            message=message,
            error_code="DEGENERATE_INPUT",
            details=details,
        )


class AmbiguousLiftException(BoxTrackException):
    """Exception for keypoints whose lift has no unique null direction."""

    def __init__(
        self,
        spectral_gap: float,
        message: Optional[str] = None,
    ):
        """
        Initialize ambiguous lift exception.

        Args:
            spectral_gap: Ratio of the two smallest eigenvalues
            message: Custom error message
        """
        if message is None:
            message = (
                f"Keypoints do not determine a box (spectral gap "
                f"{spectral_gap:.3g})"
            )
        self.spectral_gap = spectral_gap

        super().__init__(
            message=message,
            error_code="AMBIGUOUS_LIFT",
            details={"spectral_gap": spectral_gap},
        )


class TrackingLostException(BoxTrackException):
    """Exception for when a track cannot be propagated."""

    def __init__(
        self,
        message: str = "Tracking lost",
        inliers: Optional[int] = None,
        track_id: Optional[int] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        """
        Initialize tracking lost exception.

        Args:
            message: Error message
            inliers: Best inlier count reached
            track_id: Track that was lost
            details: Additional context
        """
        error_details = details or {}
        if inliers is not None:
            error_details["inliers"] = inliers
        if track_id is not None:
            error_details["track_id"] = track_id

        super().__init__(
            message=message,
            error_code="TRACKING_LOST",
            details=error_details,
        )


class UndefinedMetricException(BoxTrackException):
    """Exception for metrics evaluated on too little data."""

    def __init__(
        self,
        metric: str,
        message: Optional[str] = None,
    ):
        if message is None:
            message = f"Metric {metric} is undefined for this input"

        super().__init__(
            message=message,
            error_code="UNDEFINED_METRIC",
            details={"metric": metric},
        )


class SceneGenerationException(BoxTrackException):
    """Exception for simulator configurations that cannot be realized."""

    def __init__(
        self,
        message: str,
        frame_id: Optional[int] = None,
        object_index: Optional[int] = None,
    ):
        """
        Initialize scene generation exception.

        Args:
            message: Error message
            frame_id: Frame at which generation failed
            object_index: Object that could not be placed
        """
        details: Dict[str, Any] = {}
        if frame_id is not None:
            details["frame_id"] = frame_id
        if object_index is not None:
            details["object_index"] = object_index

        super().__init__(
            message=message,
            error_code="SCENE_GENERATION_ERROR",
            details=details,
        )
