"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ValidationError -> 1,
MetricError -> 2, OSError -> 3.
"""


class ValidationError(Exception):
    """An input artifact violates its format or invariants."""


class MetricError(Exception):
    """A metric cannot be computed from otherwise valid inputs."""
