"""Exception hierarchy.

Configuration problems (bad dimensions, malformed inputs, infeasible
requests) derive from :class:`ConfigurationError`; failures that only show
up while computing derive from :class:`NumericalError`. The CLI maps the
two families to exit codes 2 and 3.
"""

from __future__ import annotations


class MscrtError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MscrtError, ValueError):
    """Invalid input or request."""


class NumericalError(MscrtError, ArithmeticError):
    """A computation hit a degenerate configuration."""


class InvalidDimensionError(ConfigurationError):
    pass


class RankDeficiencyError(NumericalError):
    """Design matrix is not of full column rank.

    Attributes
    ----------
    columns : list of int
        Positions of the columns found to be linearly dependent on the
        columns preceding them.
    """

    def __init__(self, message: str, columns: list[int] | None = None):
        super().__init__(message)
        self.columns = list(columns or [])


class NotPSDError(NumericalError):
    pass


class DegenerateResidualError(NumericalError):
    pass


class DegenerateFitError(NumericalError):
    pass


class DegenerateInputError(NumericalError):
    pass


class FeasibilityError(ConfigurationError):
    """Statistic cannot be evaluated at the requested dimensions."""


class InvalidOrderError(ConfigurationError):
    pass


class DomainError(ConfigurationError):
    pass


class DataTypeError(ConfigurationError, TypeError):
    """Column content does not match what an operation requires."""


class InvalidSupergraphError(ConfigurationError):
    pass


class ScenarioError(ConfigurationError):
    pass


class SeparationWarning(UserWarning):
    """Logistic fit did not converge because the classes are separable."""


class RankWarning(UserWarning):
    """Dependent columns were dropped from a regression design."""
