"""Exception hierarchy shared by all modules."""


class RichTorusError(Exception):
    """Base class for every error raised by the package."""


class InvalidStateError(RichTorusError, ValueError):
    """A field point or grid violates its invariants (e.g. g <= 0)."""


class DomainError(RichTorusError, ValueError):
    """An argument lies outside the domain of the operation."""


class ArityError(RichTorusError, ValueError):
    """Wrong number of items: orders, time levels, field indices."""


class PreconditionError(RichTorusError, ValueError):
    pass


class ClassificationError(RichTorusError):
    """The operation needs a strictly hyperbolic point and did not get one."""


class NoConvergenceError(RichTorusError):
    pass


class SingularSeriesError(RichTorusError):
    pass


class RangeError(RichTorusError, ValueError):
    """A requested level c is not attained on the continuation branch."""


class CriticalLevelError(RichTorusError):
    """The level c sits at (or numerically on) a critical value of F."""


class DegenerateGraphError(RichTorusError):
    pass


class RejectedSpecError(RichTorusError, ValueError):
    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class ConfigError(RichTorusError, ValueError):
    pass
