"""Exception types shared across the toolkit.

Heavy-tailed Monte Carlo makes silent corruption unacceptable: anything that
would degrade a result (NaN particles, measures escaping a binning box,
non-convergent fixed points) raises loudly instead of being patched over.
"""


class MVStableError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(MVStableError, ValueError):
    """A parameter lies outside its admissible window."""


class AssumptionError(ParameterError):
    """A declared constant violates one of the standing assumptions (A1)-(A3)."""


class GridAlignmentError(MVStableError, ValueError):
    """A time value is not a node of the grid, or two grids disagree."""


class EmptyDataError(MVStableError, ValueError):
    """An estimator received no samples."""


class CapacityError(MVStableError, ValueError):
    """Support size exceeds the configured cap; subsample explicitly first."""


class DomainError(MVStableError, ValueError):
    """An atom lies outside the binning box (the offending atom is reported)."""


class NumericalIntegrityError(MVStableError, RuntimeError):
    """A NaN/overflow particle, a non-SPD covariance, or a failed probe."""


class NonConvergenceError(MVStableError, RuntimeError):
    """A Picard iteration hit its cap; carries the residual trace."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class ConfigError(MVStableError, ValueError):
    """An experiment config failed schema or assumption-window validation."""
