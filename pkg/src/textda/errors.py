"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so library code should raise the
most specific class that applies rather than bare ValueError.
"""


class TextdaError(Exception):
    """Base class for all package errors."""


class ConfigError(TextdaError):
    """Bad configuration value, unknown variant, malformed config file."""


class DataError(TextdaError):
    """Bad corpus/embedding/checkpoint input: missing path, malformed line,
    out-of-range rating, vocab hash mismatch."""


class NumericalError(TextdaError):
    """Non-finite or diverging values, failed gradient check, invalid
    numeric arguments to an operation."""


class ShapeError(NumericalError):
    """Dimension mismatch between operands; message names both shapes."""
