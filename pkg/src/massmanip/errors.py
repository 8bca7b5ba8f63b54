"""Exception types shared across the package."""


class MassManipError(Exception):
    """Base class for package errors."""


class ShapeError(MassManipError):
    """Array/tensor shapes do not compose. Message reports both shapes."""


class NumericError(MassManipError):
    """Non-finite value or diverging computation (CLI exit code 3)."""


class ConfigError(MassManipError):
    """Invalid configuration or missing referenced path (CLI exit code 2)."""


class DegenerateInputError(MassManipError):
    """Geometrically degenerate input (collinear rotation columns, zero-length path, ...)."""


class UntrainedModelError(MassManipError):
    """A model was asked to predict before any training step or checkpoint load."""
