"""Exception types shared across the package."""


class GuardError(RuntimeError):
    """A table, tree or run size exceeded its configured memory guard."""


class NumericsError(RuntimeError):
    """A numerical integrity check failed (e.g. a variance went negative)."""
