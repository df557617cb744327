class ConfigError(ValueError):
    """Raised for an invalid model or scenario configuration."""


class RegistrationClosed(RuntimeError):
    """Raised when an RM tries to join a transaction that has been closed."""


class UnsupportedScenario(ValueError):
    """Raised for a protocol/option combination that has no defined cost model."""
