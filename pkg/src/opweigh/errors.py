"""Exception types shared across the library.

Numerical failures (singular operators, failed brackets, unconverged
quadrature, ...) raise :class:`NumericsError` with a short stable message
so callers and the command line tool can match on it.  Malformed problem
files raise :class:`SchemaError`.
"""


class NumericsError(RuntimeError):
    """A numerical operation could not be completed reliably."""


class SchemaError(ValueError):
    """A problem file or configuration does not match the expected schema."""
