"""Exception types raised across the package."""


class ContractViolation(ValueError):
    """Inputs break a shape or state precondition."""


class DomainError(ValueError):
    """A value lies outside the domain where the objective is submodular."""


class OracleLimitError(ValueError):
    """Exhaustive search would exceed the configured enumeration limits."""


class FormatError(ValueError):
    """A data file could not be parsed.

    ``line`` is the 1-based line number of the offending record, when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
