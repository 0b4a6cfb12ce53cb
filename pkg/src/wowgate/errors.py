"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class IntegrityError(RuntimeError):
    """A computed result contradicts a guaranteed structural property."""


class ConfigError(ValueError):
    """A simulation config document failed validation.

    ``path`` locates the offending entry, e.g. ``scenarios[2].theta``.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
