"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A run configuration is missing, out of range, or inconsistent."""


class EstimationError(ValueError):
    """An estimator was asked for a quantity its inputs cannot support."""


class SchemaError(ValueError):
    """A persisted artifact does not match its declared schema."""
