"""Exception hierarchy shared by all modules."""


class ArselectError(Exception):
    """Base class for every error raised by this package."""


class InvalidSpecError(ArselectError, ValueError):
    """A process specification violates stationarity, invertibility or ranges."""


class ConfigurationError(ArselectError, ValueError):
    """A criterion or experiment configuration cannot be satisfied."""


class EstimationError(ArselectError, RuntimeError):
    """A least-squares fit required by a computation is not defined."""


class DegenerateFitError(EstimationError):
    """Residual variance is zero, so its logarithm is undefined."""


class DomainError(ArselectError, ValueError):
    """An argument lies outside the domain of a conversion."""


class DegeneratePopulationError(ArselectError, ValueError):
    """A population Toeplitz matrix is singular."""


class BoundsError(ArselectError, IndexError):
    """An index falls outside the usable range of a series."""


class InputError(ArselectError, ValueError):
    """An input file is unreadable or malformed."""
