"""Exception types shared across the package."""


class PacSwError(Exception):
    """Base class for all errors raised by pacsw."""


class DimensionMismatchError(PacSwError, ValueError):
    pass


class DataError(PacSwError, ValueError):
    """Malformed or missing input data.

    ``line`` / ``offset`` locate the problem in the source file when known.
    """

    def __init__(self, message, *, path=None, line=None, offset=None):
        parts = [message]
        if path is not None:
            parts.append(f"file={path}")
        if line is not None:
            parts.append(f"line={line}")
        if offset is not None:
            parts.append(f"offset={offset}")
        super().__init__(" | ".join(parts))
        self.path = path
        self.line = line
        self.offset = offset


class NumericalError(PacSwError, ArithmeticError):
    pass


class SamplingError(NumericalError):
    """A rejection sampler exceeded its trial cap."""
