"""Exception types shared across the package.

The CLI maps ConfigError/DataError to exit code 2 and NumericsError to 3.
"""


class ShapeError(ValueError):
    """Tensor shapes or channel counts violate an operation's contract."""


class ConfigError(ValueError):
    """Invalid model/encoder/run configuration, including unknown config keys."""


class DataError(ValueError):
    """Dataset layout, mask encoding, or label-range problems."""


class CheckpointError(RuntimeError):
    """Corrupt checkpoint file or tensor mismatch on load."""


class NumericsError(RuntimeError):
    """Non-finite loss or other numerical failure during training."""
