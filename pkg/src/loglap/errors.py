"""Error types shared across the package.

Every failure mode that a caller is expected to catch gets its own class;
plain ValueError is reserved for malformed arguments (bad shapes, unknown
kinds, out-of-range parameters).
"""


class LoglapError(Exception):
    """Base class for all package-specific failures."""


class QuadratureResolutionError(LoglapError):
    """Quadrature grid cannot resolve the requested basis products."""


class QuadratureConvergenceError(LoglapError):
    """Adaptive quadrature failed to reach the requested tolerance budget."""


class SingularOperatorError(LoglapError):
    """Galerkin operator has an eigenvalue too close to zero to invert."""


class IllConditionedError(LoglapError):
    """Galerkin operator condition number exceeds the configured bound."""


class SupportViolationError(LoglapError):
    """A source or potential is not supported where the contract requires."""


class GridTooCoarseError(LoglapError):
    """Time grid cannot separate the exponential modes present."""


class RankAmbiguousError(LoglapError):
    """Singular-value gap too weak to call the model order."""


class UnderExcitedEigenspaceError(LoglapError):
    """Source family does not reach the full multiplicity of an eigenspace."""


class UnderdeterminedSamplingError(LoglapError):
    """Constraint matrix has fewer rows than the space it must pin down."""


class NoExponentialDecayError(LoglapError):
    """Sampled profile shows no fitted exponential decay on its tail."""


class AllPairingsVanishError(LoglapError):
    """Every candidate source pairs to zero with the target eigenspace."""


class EmptyCoverageError(LoglapError):
    """Some node outside the observation set is masked for every source."""


class InconsistentCandidatesError(LoglapError):
    """Per-source recovered values disagree beyond the tolerance."""


class PreconditionError(LoglapError):
    """A documented operation precondition does not hold."""


class ConfigError(LoglapError):
    """Configuration document is malformed; message names the field."""
