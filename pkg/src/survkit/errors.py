"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: data/validation problems exit with 2,
numerical failures (degenerate designs, undefined metrics, strict-mode
non-convergence) exit with 3.
"""


class SurvkitError(Exception):
    """Base class for all toolkit errors."""


class DataValidationError(SurvkitError):
    """Invalid input data: bad shapes, values out of domain, parse failures."""


class UndefinedCIndexError(SurvkitError):
    """Concordance index requested but no comparable pair exists."""


class UndefinedCorrelationError(SurvkitError):
    """Rank correlation requested for a constant input vector."""


class DegenerateDesignError(SurvkitError):
    """Model fitting attempted on a design with no usable information."""


class ConvergenceError(SurvkitError):
    """Raised only in strict mode when an optimizer fails to converge."""
