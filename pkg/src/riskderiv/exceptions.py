"""Exception hierarchy.

Input problems derive from :class:`ValueError`; numerical failures (an
estimator was asked for something the data cannot support) derive from
:class:`NumericalFailure`. The CLI maps the former to exit code 1 and the
latter to exit code 2.
"""


class RiskDerivError(Exception):
    """Base class for all package errors."""


class ScenarioError(RiskDerivError, ValueError):
    """Malformed scenario data, weights or confidence level."""


class InfeasibleProblemError(RiskDerivError, ValueError):
    """The equality constraints of a portfolio problem have no solution."""


class NumericalFailure(RiskDerivError, ArithmeticError):
    """An estimator could not produce a reliable number."""


class EmptyAtomError(NumericalFailure):
    """No scenario sits at the requested level, so there is no atom."""


class TiePointError(NumericalFailure):
    """Scenario losses cross inside a finite-difference stencil."""


class DegenerateWeightsError(NumericalFailure):
    """Kernel weights vanish at the requested level."""


class EmptyTailError(NumericalFailure):
    """No observation lies in the requested tail."""
