"""Mean-ES portfolio choice by projected gradient descent.

Minimise ``ES_alpha(x)`` subject to ``x'mu = r_p`` and ``x'e = 1``.
Everything is in loss space: ``mu`` holds expected *losses*, so a return
target ``r`` enters as ``r_p = -r`` with ``mu = -expected_returns``.

The gradient comes either from the closed form of an elliptical model
(analytic path) or from the sample tail average on a fixed scenario set
(sample-average approximation, so the run is deterministic).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .continuous import es_gradient_tail
from .exceptions import InfeasibleProblemError
from .measures import expected_shortfall
from .oracles import EllipticalModel, elliptical_gradients, elliptical_var_es
from .scenarios import as_scenarios, check_alpha

__all__ = [
    "MeanRiskProblem",
    "SolverOptions",
    "OptimizationResult",
    "KKTReport",
    "markowitz_weights",
    "kkt_check",
    "solve_mean_es",
]


@dataclass(frozen=True)
class MeanRiskProblem:
    """``min rho(x)`` subject to ``x'mu = target_rp`` and ``x'e = 1``."""

    mu: np.ndarray
    target_rp: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64).reshape(-1)
        if mu.size < 2:
            raise ValueError("need at least two assets")
        if not np.all(np.isfinite(mu)) or not np.isfinite(self.target_rp):
            raise ValueError("mu and target_rp must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "target_rp", float(self.target_rp))
        if np.ptp(mu) <= 1e-12 * (1.0 + np.abs(mu).max()):
            # mu proportional to e: the two constraints coincide or contradict
            if abs(mu[0] - self.target_rp) > 1e-12 * (1.0 + abs(self.target_rp)):
                raise InfeasibleProblemError(
                    f"all expected losses equal {mu[0]!r}; target {self.target_rp!r} is unreachable"
                )

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def constraints(self):
        """``(A, b)`` with ``A' x = b``; ``A`` is ``d x 2`` (or ``d x 1`` if degenerate)."""
        A = np.column_stack([self.mu, np.ones(self.d)])
        b = np.array([self.target_rp, 1.0])
        if np.linalg.matrix_rank(A) < 2:
            return A[:, 1:], b[1:]
        return A, b

    def least_norm_point(self) -> np.ndarray:
        A, b = self.constraints
        return A @ np.linalg.solve(A.T @ A, b)

    def projector(self) -> np.ndarray:
        """Orthogonal projector onto the null space of ``A'``."""
        A, _ = self.constraints
        P = np.eye(self.d) - A @ np.linalg.solve(A.T @ A, A.T)
        return 0.5 * (P + P.T)

    def violation(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.array([x @ self.mu - self.target_rp, x.sum() - 1.0])


@dataclass(frozen=True)
class SolverOptions:
    gtol: float | None = None
    max_iter: int = 10000
    step0: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtrack: int = 60
    ftol: float = 1e-12


@dataclass
class KKTReport:
    multipliers: np.ndarray
    stationarity: float
    violation: np.ndarray

    def to_dict(self) -> dict:
        return {
            "multipliers": self.multipliers.tolist(),
            "stationarity": self.stationarity,
            "violation": self.violation.tolist(),
        }


@dataclass
class OptimizationResult:
    x: np.ndarray
    es: float
    converged: bool
    n_iter: int
    grad_norm: float
    kkt: KKTReport
    path: str
    trace: list = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "es": self.es,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "grad_norm": self.grad_norm,
            "kkt": self.kkt.to_dict(),
            "path": self.path,
            "trace": self.trace,
            "message": self.message,
        }


def markowitz_weights(problem: MeanRiskProblem, sigma) -> np.ndarray:
    """Minimum-variance weights under the two equality constraints.

    ``x* = Sigma^-1 A (A' Sigma^-1 A)^-1 b`` with ``A = [mu e]``.
    """
    A, b = problem.constraints
    sigma = np.asarray(sigma, dtype=np.float64)
    SiA = np.linalg.solve(sigma, A)
    return SiA @ np.linalg.solve(A.T @ SiA, b)


def kkt_check(x, problem: MeanRiskProblem, gradient) -> KKTReport:
    """Least-squares multipliers for ``grad = l1 mu + l2 e`` and the residual norm."""
    A, _ = problem.constraints
    g = np.asarray(gradient, dtype=np.float64)
    lam, *_ = np.linalg.lstsq(A, g, rcond=None)
    resid = float(np.linalg.norm(g - A @ lam))
    return KKTReport(lam, resid, problem.violation(x))


def _oracle(source, alpha):
    if isinstance(source, EllipticalModel):
        def f(x):
            return elliptical_var_es(source, x, alpha)[1]

        def g(x):
            return elliptical_gradients(source, x, alpha)[1]

        return f, g, "analytic"
    S = as_scenarios(source)

    def f(x):
        return expected_shortfall(S, x, alpha)

    def g(x):
        return es_gradient_tail(S, x, alpha)

    return f, g, "sample"


def solve_mean_es(problem: MeanRiskProblem, source, alpha: float, opts: SolverOptions | None = None,
                  x0=None) -> OptimizationResult:
    """Projected gradient descent with Armijo backtracking.

    Parameters
    ----------
    problem : MeanRiskProblem
    source : EllipticalModel or ScenarioMatrix or array
        An elliptical model gives the analytic path; a scenario set gives
        the sample path with the tail-average gradient.
    alpha : float
    opts : SolverOptions, optional
        ``gtol`` defaults to 1e-8 (analytic) or 1e-4 (sample). The sample
        objective is piecewise linear, so its projected gradient need not
        vanish at the minimiser; the sample path also stops once one
        iteration lowers the objective by less than ``ftol * (1 + |ES|)``
        or no step gives a strict decrease.
    x0 : array_like, optional
        Feasible starting point; default is the least-norm feasible point.
    """
    alpha = check_alpha(alpha)
    opts = SolverOptions() if opts is None else opts
    f, g, path = _oracle(source, alpha)
    gtol = opts.gtol if opts.gtol is not None else (1e-8 if path == "analytic" else 1e-4)
    d = problem.d
    if isinstance(source, EllipticalModel) and source.d != d:
        raise ValueError(f"model has {source.d} assets, problem has {d}")
    P = problem.projector()
    if x0 is None:
        x = problem.least_norm_point()
    else:
        x = np.asarray(x0, dtype=np.float64).reshape(-1)
        if x.shape != (d,):
            raise ValueError(f"x0 must have length {d}")
        if np.max(np.abs(problem.violation(x))) > 1e-9 * (1.0 + np.abs(x).max()):
            raise InfeasibleProblemError("x0 violates the constraints")

    fx = f(x)
    trace = [{"iter": 0, "es": fx}]
    if np.linalg.matrix_rank(P, tol=1e-10) == 0:
        # two independent constraints in R^2: the feasible set is one point
        grad = g(x)
        return OptimizationResult(x, fx, True, 0, 0.0, kkt_check(x, problem, grad), path, trace,
                                  "feasible set is a single point")

    step = opts.step0
    converged, message = False, "max_iter reached"
    it = 0
    pg_norm = np.inf
    for it in range(1, opts.max_iter + 1):
        grad = g(x)
        pg = P @ grad
        pg_norm = float(np.linalg.norm(pg))
        if pg_norm < gtol:
            converged, message = True, "projected gradient below gtol"
            it -= 1
            break
        t = min(step / opts.shrink, opts.step0 * 1e6)
        accepted = False
        for _ in range(opts.max_backtrack):
            x_new = x - t * pg
            f_new = f(x_new)
            # strict decrease: once the Armijo term is below one ulp of fx the
            # plain test would accept steps that make no progress at all
            if f_new < fx and f_new <= fx - opts.armijo * t * pg_norm**2:
                accepted = True
                break
            t *= opts.shrink
        if not accepted:
            message = "line search stalled"
            converged = path == "sample"  # piecewise-linear sample objective: no further descent
            break
        decrease = fx - f_new
        x, fx, step = x_new, f_new, t
        trace.append({"iter": it, "es": fx, "step": t, "pg_norm": pg_norm})
        if path == "sample" and decrease <= opts.ftol * (1.0 + abs(fx)):
            converged, message = True, "objective decrease below ftol"
            break
    grad = g(x)
    pg_norm = float(np.linalg.norm(P @ grad))
    if not converged and pg_norm < gtol:
        converged, message = True, "projected gradient below gtol"
    return OptimizationResult(x, fx, converged, it, pg_norm, kkt_check(x, problem, grad), path, trace, message)
