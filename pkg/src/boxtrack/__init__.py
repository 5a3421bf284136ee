"""9-DoF box detection and tracking on synthetic camera streams."""

from .cli import main

__all__ = ["main"]
