class ConfigurationError(ValueError):
    """Invalid parameters passed to a channel, detector, code or scenario."""


class UnsupportedConfigurationError(ConfigurationError):
    """Parameters are well formed but outside what is implemented (e.g. P > 3)."""
