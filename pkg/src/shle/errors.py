"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`ShleError`
so callers can isolate failures per frame or per scene.  Each class carries a
short ``code`` used as the skip reason in pipeline output.
"""

from __future__ import annotations


class ShleError(Exception):
    code = "error"


class ConfigurationError(ShleError, ValueError):
    """Inconsistent dimensions, missing camera fields, bad config values."""

    code = "configuration"


class DomainError(ShleError, ValueError):
    """Input outside the mathematical domain of an operation."""

    code = "domain"


class EmptyExtractionError(ShleError):
    code = "empty_extraction"


class EmptyAfterFilterError(ShleError):
    code = "empty_after_filter"


class NoSampleError(ShleError):
    code = "no_sample"


class NoDeviceError(ShleError):
    """No anchor detection survived stage 1 for a scene."""

    code = "no_device"


class NoSceneEstimateError(ShleError):
    code = "no_scene_estimate"


class TrackerUnavailableError(ShleError):
    code = "tracker_unavailable"


class FormatError(ShleError, ValueError):
    """Malformed file contents.  ``offset`` is the byte offset, when known."""

    code = "format"

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(ShleError, ValueError):
    code = "validation"


class DegenerateSpecError(ShleError, ValueError):
    code = "degenerate_spec"


class UsageError(ShleError, ValueError):
    code = "usage"
