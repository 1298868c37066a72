"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    pass


class InvalidState(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f" line {line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class NumericError(ArithmeticError):
    pass


class SamplerStuck(RuntimeError):
    pass


class UndefinedMetric(ValueError):
    pass
