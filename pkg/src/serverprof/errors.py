"""Exception types shared across the toolkit."""


class ConfigError(Exception):
    """Invalid configuration: bad filter rule, unknown relation, bad profile."""


class DataError(Exception):
    """Malformed or contract-violating input data."""


class NormalizationError(DataError):
    """Identity normalization was asked to process invalid input."""


class WindowError(DataError):
    """Reference window cannot be satisfied for the requested test epoch."""
