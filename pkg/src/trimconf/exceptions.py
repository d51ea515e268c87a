"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a numeric routine."""


class DegenerateRetention(DomainError):
    """Trimming removes every calibration point with probability one."""


class MissingComponent(DomainError):
    """A retained component law is requested but has zero retention mass."""


class ConfigError(ValueError):
    """A run configuration is malformed or incomplete."""
