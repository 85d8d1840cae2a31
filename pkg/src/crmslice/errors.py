class InvariantViolation(RuntimeError):
    """A sampler state or kernel input broke a structural invariant."""


class ConfigError(ValueError):
    """Invalid sampler or run configuration."""
