"""Exception hierarchy shared across the package."""


class SchedulerError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SchedulerError):
    """Bad configuration: unreadable file, unknown method, invalid option."""


class ParseError(ConfigError):
    """An input file failed to parse; carries path and position context."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class InvariantError(SchedulerError):
    """A domain object violated one of its structural invariants."""


class PlanValidationError(SchedulerError):
    """A scheduling plan does not fit the model graph or resource catalog."""


class InfeasibleError(SchedulerError):
    """No provisioning can satisfy the throughput limit and quotas.

    ``gap`` is a non-negative magnitude of the violation (0 when unknown),
    used by searchers to order infeasible plans.
    """

    def __init__(self, message, gap=0.0):
        super().__init__(message)
        self.gap = max(0.0, float(gap))


class NumericError(SchedulerError):
    """A computation produced non-finite values."""
