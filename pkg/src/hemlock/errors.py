"""Exception types shared across the package."""


class UsageError(Exception):
    """API misuse: double registration, recursive acquire, releasing a
    non-held lock in debug mode, malformed configuration, and the like."""


class IntegrityError(Exception):
    """A runtime invariant that a benchmark or audit guards was violated."""
