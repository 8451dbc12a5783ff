"""Exception types shared across the package.

The CLI maps these onto process exit codes: bad or unusable input data is a
:class:`DataError` (exit 2), a failure arising during numerical computation
is a :class:`NumericalError` (exit 3). Usage problems (unknown flags, bad
plan files) stay plain ``ValueError``/argparse errors (exit 1).
"""


class MixicaError(Exception):
    """Base class for package-specific errors."""


class DataError(MixicaError):
    """Input data is missing, malformed, degenerate, or inconsistent."""


class NumericalError(MixicaError):
    """A numerical procedure produced an unusable result (singular matrix,
    non-finite statistics)."""
