"""Exception and warning types shared across the package."""


class StyleTransferError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(StyleTransferError):
    """Invalid parameters, flag combinations, or preconditions."""


class FormatError(StyleTransferError):
    """Malformed or corrupt on-disk artifacts (weight files, model files)."""


class NumericError(StyleTransferError):
    """Degenerate or invalid numerical input."""


class DegenerateFeaturesWarning(UserWarning):
    """Emitted when a transform hits a rank-deficient or trivial input and
    falls back to a documented degenerate behavior."""
