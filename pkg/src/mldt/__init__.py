"""Multilevel detection (MLDT) of users sharing one resource over independent Rayleigh fading."""

from .errors import ConfigurationError, UnsupportedConfigurationError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "UnsupportedConfigurationError", "__version__"]
