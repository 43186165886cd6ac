"""Error taxonomy shared across the package.

Two failure families matter to callers (and map to distinct CLI exit codes):
bad inputs (schema/config problems in user-supplied files) and numerical
breakdowns (optimizer or sampler failure).  Everything else is a plain bug
and raises whatever it raises.
"""

__all__ = ["SchemaError", "ConfigError", "NumericalError"]


class SchemaError(ValueError):
    """User-supplied data violates a documented file schema."""


class ConfigError(SchemaError):
    """Configuration file is malformed or references missing inputs."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (factorization, fit, sampler pathology)."""
