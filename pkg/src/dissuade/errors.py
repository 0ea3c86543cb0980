"""Exception hierarchy shared by the engine and the CLI."""


class DissuadeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DissuadeError, ValueError):
    """Invalid scenario file or distribution parameters.

    ``path`` is the dotted field path of the offending entry (for example
    ``measures[3].deterrence_prior.alpha``) and ``line`` the 1-based source
    line when the error comes from the parser.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.message = message
        self.path = path
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if path:
            prefix += f"{path}: "
        super().__init__(prefix + message)


class ValidationError(DissuadeError, ValueError):
    """A diagram or game built from inconsistent numbers."""


class UsageError(DissuadeError, ValueError):
    """An operation was called with arguments outside its domain."""
