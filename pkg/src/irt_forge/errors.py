"""Exception hierarchy shared by every module."""


class IRTError(Exception):
    """Base class for all errors raised by irt_forge."""


class DomainError(IRTError, ValueError):
    """A numeric argument lies outside the domain of a model function."""


class ContractError(IRTError, ValueError):
    """Arguments are individually valid but inconsistent with each other."""


class FormatError(IRTError, ValueError):
    """Input data violates the response-pattern format."""


class ParseError(FormatError):
    """A line of a jsonlines file could not be decoded."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class RegistryError(IRTError, LookupError):
    """Duplicate registration or lookup of an unknown model name."""

    def __str__(self):
        # LookupError quotes single-argument messages; keep them readable
        return str(self.args[0]) if self.args else ""


class TrainingError(IRTError, RuntimeError):
    """Fitting failed, e.g. the objective became non-finite."""

    def __init__(self, message, epoch=None, trace=None):
        super().__init__(message)
        self.epoch = epoch
        self.trace = list(trace) if trace is not None else []


class ConvergenceError(TrainingError):
    """A safeguarded Newton solve did not converge."""

    def __init__(self, message, item=None, **kwargs):
        super().__init__(message, **kwargs)
        self.item = item
