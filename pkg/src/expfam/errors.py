"""Exception types shared across the package."""


class DomainError(ValueError):
    """A natural parameter lies outside the family's natural parameter space."""


class DivergenceError(ArithmeticError):
    """A series cannot be certified to converge at the requested point."""


class SingularSupport(ValueError):
    """A direction has no mass on the support, so a restricted ratio is undefined."""


class ValidationError(ValueError):
    """A configuration value violates a stated invariant."""


class ParseError(ValueError):
    """A configuration or data file could not be parsed.

    ``location`` carries a line/column or a dotted field path when known.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)
