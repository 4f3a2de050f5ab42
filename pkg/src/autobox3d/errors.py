"""Error hierarchy for the auto-labelling pipeline.

Every error the package raises deliberately derives from AutoboxError so
callers can catch one type at the CLI boundary.
"""


class AutoboxError(Exception):
    pass


class MissingFile(AutoboxError):
    pass


class DimensionMismatch(AutoboxError):
    pass


class MalformedHeader(AutoboxError):
    pass


class IoFailure(AutoboxError):
    pass


class ParseError(AutoboxError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NonPositiveDepth(AutoboxError):
    pass


class NonPositiveFocal(AutoboxError):
    pass


class UnknownInstanceId(AutoboxError):
    pass


class EmptyCloud(AutoboxError):
    pass


class EmptyInput(AutoboxError):
    pass


class TooShort(AutoboxError):
    pass


class TooFewPoints(AutoboxError):
    pass


class InvalidSpec(AutoboxError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class FrameSetMismatch(AutoboxError):
    pass
