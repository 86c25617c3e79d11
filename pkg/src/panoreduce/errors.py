"""Exception types shared across the pipeline."""


class PanoReduceError(Exception):
    """Base class for all package errors."""


class ContractError(PanoReduceError, ValueError):
    """A precondition of an operation was violated by the caller."""


class FormatError(PanoReduceError):
    """Malformed image file. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class UnsupportedEndiannessError(FormatError):
    pass


class SchemaError(PanoReduceError, ValueError):
    """A JSON document does not match its schema. ``path`` names the field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class DegenerateSampleError(PanoReduceError):
    """Three points that do not span a plane."""


class NoPlaneError(PanoReduceError):
    pass


class DetectorError(PanoReduceError):
    """A detector failed. ``raw`` holds the offending response line, if any."""

    def __init__(self, message, raw=None):
        self.raw = raw
        if raw is not None:
            message = f"{message}; raw response: {raw!r}"
        super().__init__(message)


class ProtocolError(DetectorError):
    pass


class StageError(PanoReduceError):
    """Wraps a failure with the name of the pipeline stage it happened in."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
