"""Exception hierarchy shared across the package."""


class KgcqrError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(KgcqrError):
    """Malformed input value (empty entity id, bad alpha range, ...)."""


class ParseError(KgcqrError):
    """A persisted file could not be parsed; carries the offending line."""

    def __init__(self, message: str, path: str = "", line: int = 0):
        self.path = path
        self.line = line
        prefix = f"{path}:{line}: " if path else (f"line {line}: " if line else "")
        super().__init__(prefix + message)


class IntegrityError(KgcqrError):
    """Two artifacts that must agree (graph vs. index) do not."""


class ConfigError(KgcqrError):
    """Invalid or inconsistent configuration."""
