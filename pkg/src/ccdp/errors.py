"""Error types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not line up."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class ConfigError(ValueError):
    """Bad or missing configuration."""
