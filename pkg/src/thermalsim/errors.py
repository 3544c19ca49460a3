"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, everything else just raises.
"""


class ThermalsimError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ThermalsimError):
    """Invalid user input: bad config keys, types, ranges, CLI usage."""


class InvariantViolation(ThermalsimError):
    """A numerical invariant failed (positivity, trace preservation, ...)."""


class ConvergenceFailure(ThermalsimError):
    """An iterative numerical scheme failed to stabilize within tolerance."""
