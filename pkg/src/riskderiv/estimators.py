"""scikit-learn style front ends.

The estimators take a loss matrix ``X`` (scenarios x assets) in ``fit`` and
expose results as trailing-underscore attributes, so they work with
``get_params``/``set_params``/``clone`` and can be dropped into tooling
that expects the estimator protocol. They hold no state beyond what
``fit`` computes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .continuous import es_gradient_tail, es_hessian, var_gradient_kernel
from .discrete import es_gradient_discrete, var_gradient_discrete
from .heavy_tail import hill_estimator
from .kernels import KernelSpec
from .measures import expected_shortfall, value_at_risk
from .portfolio import MeanRiskProblem, SolverOptions, solve_mean_es
from .scenarios import ScenarioMatrix, check_alpha, check_weights

__all__ = [
    "RiskReport",
    "risk_report",
    "EmpiricalRiskEstimator",
    "KernelRiskEstimator",
    "HillEstimator",
    "MeanESPortfolio",
]


@dataclass
class RiskReport:
    """Value, gradient, optional Hessian and Euler allocation for one (measure, x, alpha)."""

    measure: str
    alpha: float
    x: np.ndarray
    value: float
    gradient: np.ndarray
    hessian: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def allocation(self) -> np.ndarray:
        return self.x * self.gradient

    @property
    def euler_gap(self) -> float:
        return float(self.allocation.sum() - self.value)

    def to_dict(self) -> dict:
        return {
            "measure": self.measure,
            "alpha": self.alpha,
            "x": self.x.tolist(),
            "value": self.value,
            "gradient": self.gradient.tolist(),
            "hessian": None if self.hessian is None else self.hessian.tolist(),
            "allocation": self.allocation.tolist(),
            "euler_gap": self.euler_gap,
            "diagnostics": self.diagnostics,
        }


def risk_report(S, x, alpha: float, measure: str = "es", mode: str = "discrete",
                kernel: KernelSpec | None = None) -> RiskReport:
    """Build a :class:`RiskReport` for ``var`` or ``es``.

    ``mode="discrete"`` uses the atom formulas (exact for the empirical
    law); ``mode="kernel"`` uses the kernel VaR gradient, the tail-average
    ES gradient and the kernel ES Hessian.
    """
    if measure not in ("var", "es"):
        raise ValueError("measure must be 'var' or 'es'")
    if mode not in ("discrete", "kernel"):
        raise ValueError("mode must be 'discrete' or 'kernel'")
    w = check_weights(x, S.d)
    alpha = check_alpha(alpha)
    k = KernelSpec() if kernel is None else kernel
    value = value_at_risk(S, w, alpha) if measure == "var" else expected_shortfall(S, w, alpha)
    H = None
    diag = {"mode": mode, "n": S.n}
    if mode == "discrete":
        grad = var_gradient_discrete(S, w, alpha) if measure == "var" else es_gradient_discrete(S, w, alpha)
    else:
        if measure == "var":
            grad = var_gradient_kernel(S, w, alpha, k)
        else:
            grad = es_gradient_tail(S, w, alpha)
            H = es_hessian(S, w, alpha, k)
        L = S.losses @ w
        diag["bandwidth"] = k.resolve(L, None if S.is_uniform else S.probs)
        diag["kernel"] = k.kernel
    return RiskReport(measure, alpha, w, float(value), np.asarray(grad), H, diag)


def _scenarios(X, sample_weight=None) -> ScenarioMatrix:
    X = check_array(X, dtype=np.float64, ensure_2d=False, ensure_all_finite=True)
    return ScenarioMatrix(X, sample_weight)


class EmpiricalRiskEstimator(BaseEstimator):
    """Empirical VaR and ES with exact discrete gradients.

    Parameters
    ----------
    alpha : float
        Confidence level.
    weights : array_like, optional
        Portfolio weights; equal weights of 1 when omitted.

    Attributes
    ----------
    var_, es_ : float
    var_gradient_, es_gradient_ : ndarray of shape (n_features,)
    allocation_ : ndarray
        Euler contributions ``x_i * dES/dx_i``; they sum to ``es_``.
    """

    def __init__(self, alpha: float = 0.95, weights=None):
        self.alpha = alpha
        self.weights = weights

    def fit(self, X, y=None, sample_weight=None):
        S = _scenarios(X, sample_weight)
        w = np.ones(S.d) if self.weights is None else check_weights(self.weights, S.d)
        var = risk_report(S, w, self.alpha, "var")
        es = risk_report(S, w, self.alpha, "es")
        self.n_features_in_ = S.d
        self.weights_ = w
        self.var_, self.var_gradient_ = var.value, var.gradient
        self.es_, self.es_gradient_ = es.value, es.gradient
        self.allocation_ = es.allocation
        self.report_ = es
        return self


class KernelRiskEstimator(BaseEstimator):
    """Kernel and tail-average derivative estimates for continuous losses.

    Parameters
    ----------
    alpha : float
    weights : array_like, optional
    bandwidth : float, optional
        Multiplier on the ``std * n**(-1/5)`` rule, or the bandwidth itself
        when ``bandwidth_rule="manual"``.
    kernel : {"gaussian", "epanechnikov"}
    bandwidth_rule : {"scale_n_pow_minus_fifth", "manual"}
    """

    def __init__(self, alpha: float = 0.95, weights=None, bandwidth=None, kernel: str = "gaussian",
                 bandwidth_rule: str = "scale_n_pow_minus_fifth"):
        self.alpha = alpha
        self.weights = weights
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.bandwidth_rule = bandwidth_rule

    def _kernel(self) -> KernelSpec:
        return KernelSpec(self.bandwidth, self.kernel, self.bandwidth_rule)

    def fit(self, X, y=None):
        S = _scenarios(X)
        k = self._kernel()
        w = np.ones(S.d) if self.weights is None else check_weights(self.weights, S.d)
        self.n_features_in_ = S.d
        self.weights_ = w
        self.var_ = value_at_risk(S, w, self.alpha)
        self.es_ = expected_shortfall(S, w, self.alpha)
        self.var_gradient_ = var_gradient_kernel(S, w, self.alpha, k)
        self.es_gradient_ = es_gradient_tail(S, w, self.alpha)
        self.es_hessian_ = es_hessian(S, w, self.alpha, k)
        self.bandwidth_ = k.resolve(S.losses @ w)
        return self

    def allocation(self) -> np.ndarray:
        check_is_fitted(self, "es_gradient_")
        return self.weights_ * self.es_gradient_


class HillEstimator(BaseEstimator):
    """Tail index of a positive sample from its upper order statistics."""

    def __init__(self, k_order: int | None = None):
        self.k_order = k_order

    def fit(self, X, y=None):
        v = check_array(X, dtype=np.float64, ensure_2d=False).reshape(-1)
        est = hill_estimator(v, self.k_order)
        self.kappa_hat_ = est.kappa_hat
        self.stderr_ = est.stderr
        self.k_order_ = est.k_order
        return self


class MeanESPortfolio(BaseEstimator):
    """Minimum-ES portfolio on a scenario set with mean and budget constraints.

    ``fit(X)`` uses the column means of ``X`` as expected losses unless
    ``mu`` is given.
    """

    def __init__(self, alpha: float = 0.95, target_rp: float = 0.0, mu=None, gtol: float | None = None,
                 max_iter: int = 10000):
        self.alpha = alpha
        self.target_rp = target_rp
        self.mu = mu
        self.gtol = gtol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        S = _scenarios(X)
        mu = S.mean() if self.mu is None else np.asarray(self.mu, dtype=np.float64)
        problem = MeanRiskProblem(mu, self.target_rp)
        res = solve_mean_es(problem, S, self.alpha, SolverOptions(gtol=self.gtol, max_iter=self.max_iter))
        self.n_features_in_ = S.d
        self.weights_ = res.x
        self.es_ = res.es
        self.converged_ = res.converged
        self.result_ = res
        return self
