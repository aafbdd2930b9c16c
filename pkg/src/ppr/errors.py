"""Exception hierarchy shared across the package."""


class PprError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PprError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(PprError, ValueError):
    """Inconsistent or incomplete configuration (flags, penalty ranges, inputs)."""


class RankError(PprError, ValueError):
    """A matrix required to be invertible is numerically rank deficient."""


class ConvergenceError(PprError, RuntimeError):
    """An iterative solver exhausted its iteration budget without converging."""


class AlgorithmError(PprError, RuntimeError):
    """An internal invariant of an algorithm was violated (e.g. ascent on a convex objective)."""
