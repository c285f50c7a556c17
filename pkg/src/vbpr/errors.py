class VbprError(Exception):
    """Base class for errors raised by this package."""


class ParseError(VbprError, ValueError):
    """Malformed input file."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line


class DataError(VbprError, ValueError):
    """Input data violates a structural requirement."""


class DimensionError(VbprError, ValueError):
    """Shapes of parameters and inputs disagree."""


class DivergenceError(VbprError, FloatingPointError):
    """Training produced a non-finite value."""

    def __init__(self, message: str, epoch=None, triple=None, parameter=None):
        super().__init__(message)
        self.epoch = epoch
        self.triple = triple
        self.parameter = parameter
