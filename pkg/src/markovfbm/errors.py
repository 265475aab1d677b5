"""Exception types shared across the package.

Invalid arguments raise plain ``ValueError``; numerical breakdowns raise
:class:`NumericalFailure` so callers (the CLI in particular) can tell the two
apart.
"""


class NumericalFailure(ArithmeticError):
    """A computation broke down numerically (non-PSD matrix, overflow, ...)."""


class NotPSDError(NumericalFailure):
    """A matrix expected to be positive semidefinite has a negative pivot."""
