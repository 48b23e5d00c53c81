"""Exception types shared across the package."""


class ConstraintViolationError(ValueError):
    """An action profile violates bounds or a per-player cap."""


class ConfigError(ValueError):
    """A configuration document is invalid or internally inconsistent."""


class NumericError(RuntimeError):
    """A linear-algebra routine failed beyond recoverable jitter."""


class GridSizeError(ValueError):
    """A candidate grid exceeds the exhaustive-search guard."""
