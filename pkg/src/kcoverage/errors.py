"""Exception types shared across the package."""


class KCoverageError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(KCoverageError, ValueError):
    pass


class DiameterTooLarge(KCoverageError, ValueError):
    """A point configuration cannot be lifted to a single Euclidean chart."""


class Degenerate(KCoverageError):
    """Affinely dependent or ill-conditioned configuration."""


class Marginal(KCoverageError):
    """A non-generator point lies within the tolerance band of a sphere."""


class DegenerateTrial(KCoverageError):
    """An enumeration hit a Degenerate or Marginal configuration."""


class InsufficientPoints(KCoverageError, ValueError):
    pass


class InsufficientTrials(KCoverageError, ValueError):
    pass


class OutOfRegime(KCoverageError):
    """Vacancy persists at radius 1/4, where the Morse criterion is not valid."""


class ConfigError(KCoverageError, ValueError):
    pass
