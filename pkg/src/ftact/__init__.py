"""Planar pick-and-reorient simulator, force/torque-aware chunked policy, and evaluation harness."""

__version__ = "0.1.0"


class FtactError(Exception):
    """Base class for domain errors; the CLI maps these to exit code 1."""
