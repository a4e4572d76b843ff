"""Risk measures on portfolio losses and their derivatives.

Value-at-Risk and Expected Shortfall on weighted scenario sets, exact
gradients for discrete distributions, kernel estimators for continuous
ones, closed-form and finite-difference oracles, heavy-tail ratio ladders
and a mean-ES portfolio solver.
"""
from types import ModuleType as _ModuleType

from .config import DEFAULT_TOLERANCES, Tolerances
from .continuous import (
    convexity_check,
    es_gradient_tail,
    es_hessian,
    es_tail_integral,
    generic_gradient_identity,
    homogeneity_identity,
    tail_gradient_identity,
    var_gradient_kernel,
)
from .discrete import (
    es_gradient_discrete,
    is_tie_point,
    risk_gradient_discrete,
    second_derivative_probe,
    var_gradient_discrete,
)
from .estimators import (
    EmpiricalRiskEstimator,
    HillEstimator,
    KernelRiskEstimator,
    MeanESPortfolio,
    RiskReport,
    risk_report,
)
from .exceptions import (
    DegenerateWeightsError,
    EmptyAtomError,
    EmptyTailError,
    InfeasibleProblemError,
    NumericalFailure,
    RiskDerivError,
    ScenarioError,
    TiePointError,
)
from .heavy_tail import (
    RatioLadder,
    TailIndexEstimate,
    TailReport,
    conditional_mean_levels,
    es_var_ratio_ladder,
    hill_estimator,
    regular_variation_probe,
    second_moment_ratio_ladder,
    tail_correlation,
    tail_correlation_ladder,
    tail_probability_forms,
)
from .kernels import ConditionalMoments, KernelSpec, conditional_moments_at, kde_density
from .measures import (
    ExpectedShortfall,
    FunctionMeasure,
    MeanLoss,
    RiskMeasure,
    ScaledMeasure,
    ValueAtRisk,
    coherence_probe,
    expected_shortfall,
    value_at_risk,
)
from .oracles import (
    EllipticalMeasure,
    EllipticalModel,
    HeavyTailModel,
    elliptical_gradients,
    elliptical_var_es,
    fd_gradient,
    fd_hessian,
    pareto_var_es,
    sample,
)
from .portfolio import MeanRiskProblem, SolverOptions, kkt_check, markowitz_weights, solve_mean_es
from .scenarios import ScenarioMatrix, load_scenarios, portfolio_loss, save_scenarios

__version__ = "0.1.0"

__all__ = sorted(
    name for name, obj in list(globals().items())
    if not name.startswith("_") and not isinstance(obj, _ModuleType)
)
