"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 2, DataError -> 3,
NumericalError -> 4, verification failure -> 5.
"""


class WavemixError(Exception):
    """Base class for all package errors."""


class ConfigError(WavemixError):
    """Invalid configuration: bad shapes, divisibility, unknown keys."""


class ShapeError(ConfigError):
    """Tensor shapes inconsistent with an operation's contract."""


class DataError(WavemixError):
    """Malformed dataset files or out-of-range labels."""


class NumericalError(WavemixError):
    """Non-finite values encountered where the contract forbids them."""


class VerificationError(WavemixError):
    """An invariant suite was asked for something it cannot run."""
