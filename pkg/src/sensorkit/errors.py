"""Exception hierarchy shared by every module.

The CLI maps these onto its exit-code contract: usage problems exit 1,
file/config format problems exit 2, and numeric or geometric problems
exit 3.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(ToolkitError):
    """Malformed file content; carries the byte offset where parsing failed."""

    def __init__(self, message: str, *, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(FormatError):
    """Invalid configuration; the message names the full key path."""

    def __init__(self, message: str, *, path: str | None = None):
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path


class ShapeError(ToolkitError):
    """Array or grid dimensions do not match what the operation requires."""


class InvalidInputError(ToolkitError):
    """A value is outside the domain an operation accepts."""


class DegenerateInputError(ToolkitError):
    """Input is structurally valid but has no meaningful answer (e.g. empty)."""


class NumericError(ToolkitError):
    """A numerical procedure failed; carries the residual when known."""

    def __init__(self, message: str, *, residual: float | None = None):
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class ProjectionError(ToolkitError):
    """Point cannot be projected by the camera model (e.g. behind a pinhole)."""


class TimeRangeError(ToolkitError):
    """Queried timestep lies outside the scene's trajectory range."""


class ContractError(ToolkitError):
    """A pluggable component violated its contract; names the offending field."""

    def __init__(self, message: str, *, field: str | None = None):
        if field is not None:
            message = f"{message} (field: {field})"
        super().__init__(message)
        self.field = field
