"""Derivative estimators and identity checks for continuous loss distributions.

Gradients and the ES Hessian are estimated from a sample (a
:class:`ScenarioMatrix`, usually equally weighted). The identity functions
take a risk measure with a known gradient and return residuals that should
be close to zero; they validate the measure against the sample rather than
estimate anything new.

Tail-probability derivatives are central differences with common random
numbers (the same sample at every stencil point) of the kernel-smoothed
tail probability. Integrals of the tail probability over ``[t, inf)`` are
taken exactly, as the expected excess ``E[(H - t)^+]``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_TOLERANCES
from .discrete import es_gradient_discrete
from .exceptions import EmptyTailError
from .kernels import (
    DEFAULT_KERNEL,
    KernelSpec,
    conditional_moments_at,
    kde_density,
    kernel_cdf,
    smoothed_expected_excess,
    smoothed_tail_probability,
)
from .measures import RiskMeasure, quantile_index
from .oracles import fd_hessian
from .scenarios import as_scenarios, check_alpha, check_weights

__all__ = [
    "default_fd_step",
    "var_gradient_kernel",
    "es_gradient_tail",
    "es_hessian",
    "IdentityResult",
    "generic_gradient_identity",
    "tail_gradient_identity",
    "es_tail_integral",
    "HomogeneityResult",
    "homogeneity_identity",
    "ConvexityReport",
    "convexity_check",
]


def default_fd_step(x) -> np.ndarray:
    return 1e-3 * (1.0 + np.abs(np.asarray(x, dtype=np.float64)))


def _probs(S):
    return None if S.is_uniform else S.probs


def _quantile(S, L, alpha):
    return float(L[quantile_index(L, _probs(S), alpha)])


def var_gradient_kernel(S, x, alpha: float, k: KernelSpec = DEFAULT_KERNEL) -> np.ndarray:
    """``E[L_i | L(x) = q_alpha]`` by Nadaraya-Watson at the sample quantile."""
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    alpha = check_alpha(alpha)
    q = _quantile(S, S.losses @ w, alpha)
    return conditional_moments_at(S, w, q, k).mean


def es_gradient_tail(S, x, alpha: float) -> np.ndarray:
    """``E[L_i | L(x) >= q_alpha]`` as a sample tail average.

    The tail carries probability exactly ``1 - alpha``: scenarios strictly
    above the quantile count fully and the quantile atom gets the remaining
    mass. With that split the result equals the atom-corrected discrete
    formula, and ``x @ grad`` equals the sample ES.

    Raises
    ------
    EmptyTailError
        No scenario lies strictly above the sample quantile.
    """
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    alpha = check_alpha(alpha)
    L = S.losses @ w
    if S.is_uniform:
        n = S.n
        j = quantile_index(L, None, alpha)
        q = L[j]
        above = np.flatnonzero(L > q)
        if above.size == 0:
            raise EmptyTailError(f"no sample exceeds the {alpha} quantile")
        at = np.flatnonzero(L == q)
        if at.size == 1:
            mass_above = above.size / n
            atom_mass = (1.0 - alpha) - mass_above
            tail = S.losses[above].sum(axis=0) / n + atom_mass * S.losses[j]
            return tail / (1.0 - alpha)
    else:
        q = _quantile(S, L, alpha)
        if not np.any(L > q):
            raise EmptyTailError(f"no sample exceeds the {alpha} quantile")
    return es_gradient_discrete(S, w, alpha)


def es_hessian(S, x, alpha: float, k: KernelSpec = DEFAULT_KERNEL) -> np.ndarray:
    """``f(q) Cov[L_i, L_j | L(x) = q] / (1 - alpha)`` from kernel moments."""
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    alpha = check_alpha(alpha)
    q = _quantile(S, S.losses @ w, alpha)
    cm = conditional_moments_at(S, w, q, k)
    H = cm.density * cm.cov / (1.0 - alpha)
    return 0.5 * (H + H.T)


# ------------------------------------------------------------ identity checks


def _h_values(S, measure: RiskMeasure, w):
    return S.losses @ w - measure.evaluate(S, w)


def _stencil(d, steps):
    for i in range(d):
        e = np.zeros(d)
        e[i] = steps[i]
        yield i, e


@dataclass
class IdentityResult:
    """Residual of a first-order identity for one measure."""

    residual: np.ndarray
    gradient: np.ndarray
    terms: dict
    level: float
    warnings: list = field(default_factory=list)

    @property
    def relative(self) -> float:
        return float(np.linalg.norm(self.residual) / max(np.linalg.norm(self.gradient), 1e-300))

    def to_dict(self) -> dict:
        return {
            "residual": self.residual.tolist(),
            "gradient": self.gradient.tolist(),
            "relative_residual": self.relative,
            "level": self.level,
            "terms": {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.terms.items()},
            "warnings": list(self.warnings),
        }


def _tail_prob_gradient(S, measure, w, t, k, steps):
    """Central differences of the smoothed ``P[H(x) > t]`` and per-scenario contributions."""
    probs = _probs(S)
    grads = np.empty(w.shape[0])
    contrib = np.zeros(S.n)

    def per_scenario(z):
        H = _h_values(S, measure, z)
        h = k.resolve(H + measure.evaluate(S, z), probs)
        return kernel_cdf((H - t) / h, k.kernel)

    for i, e in _stencil(w.shape[0], steps):
        diff = (per_scenario(w + e) - per_scenario(w - e)) / (2.0 * steps[i])
        grads[i] = diff.mean() if probs is None else probs @ diff
        contrib += w[i] * diff
    return grads, contrib


def generic_gradient_identity(S, x, measure: RiskMeasure, t: float = 0.0, k: KernelSpec = DEFAULT_KERNEL,
                              fd_step=None) -> IdentityResult:
    """Check ``d rho/dx_i = E[L_i | H = t] - (d/dx_i P[H > t]) / f_H(t)``.

    ``H(x) = L(x) - rho(x)``. The conditional mean and density are kernel
    estimates at ``L(x) = rho(x) + t``; the tail-probability derivative is
    a common-random-number central difference.
    """
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    if not measure.has_gradient:
        raise ValueError("measure has no analytic gradient")
    steps = default_fd_step(w) if fd_step is None else np.broadcast_to(np.asarray(fd_step, float), w.shape)
    grad = np.asarray(measure.gradient(S, w), dtype=np.float64)
    rho = measure.evaluate(S, w)
    cm = conditional_moments_at(S, w, rho + t, k)
    dF, _ = _tail_prob_gradient(S, measure, w, t, k, steps)
    notes = []
    if cm.density < DEFAULT_TOLERANCES.density_warn:
        msg = f"density of H at {t} is {cm.density:.3g}; the correction term is unreliable"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    rhs = cm.mean - dF / cm.density
    return IdentityResult(
        grad - rhs, grad,
        {"conditional_mean": cm.mean, "density": cm.density, "tail_prob_gradient": dF, "bandwidth": cm.bandwidth},
        float(t), notes,
    )


def _excess_gradient(S, measure, w, t_level, steps):
    """Central differences of ``E[(H(x) - t)^+] = int_t^inf P[H > z] dz``, ``t`` held fixed."""
    probs = _probs(S)
    g = np.empty(w.shape[0])

    def excess(z):
        v = np.maximum(_h_values(S, measure, z) - t_level, 0.0)
        return v.mean() if probs is None else probs @ v

    for i, e in _stencil(w.shape[0], steps):
        g[i] = (excess(w + e) - excess(w - e)) / (2.0 * steps[i])
    return g


def tail_gradient_identity(S, x, measure: RiskMeasure, t_level: float, fd_step=None) -> IdentityResult:
    """Check ``d rho/dx_i = E[L_i | H >= t] - int_t^inf d/dx_i P[H > z] dz / P[H >= t]``.

    The integral is the derivative of the expected excess ``E[(H - t)^+]``
    with ``t`` fixed, by central differences on the same sample. The term
    ``integral / P[H >= t]`` is returned as ``terms["integral_term"]``.
    """
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    if not measure.has_gradient:
        raise ValueError("measure has no analytic gradient")
    steps = default_fd_step(w) if fd_step is None else np.broadcast_to(np.asarray(fd_step, float), w.shape)
    grad = np.asarray(measure.gradient(S, w), dtype=np.float64)
    H = _h_values(S, measure, w)
    tail = H >= t_level
    if not np.any(tail):
        raise EmptyTailError(f"no scenario has H(x) >= {t_level!r}")
    pt = S.probs[tail]
    tail_prob = float(pt.sum())
    tail_mean = (pt @ S.losses[tail]) / tail_prob
    integral = _excess_gradient(S, measure, w, t_level, steps)
    term = integral / tail_prob
    return IdentityResult(
        grad - tail_mean + term, grad,
        {"tail_mean": tail_mean, "tail_probability": tail_prob, "integral": integral, "integral_term": term},
        float(t_level),
    )


def es_tail_integral(S, x, alpha: float, measure: RiskMeasure | None = None, fd_step=None) -> IdentityResult:
    """Tail identity for ``rho = ES`` at ``t = q_alpha - ES``.

    Here ``{H >= t} = {L >= q}`` and the integral term should vanish; it is
    reported in ``terms["integral_term"]`` (gradient units).
    """
    from .measures import ExpectedShortfall

    S = as_scenarios(S)
    w = check_weights(x, S.d)
    alpha = check_alpha(alpha)
    measure = ExpectedShortfall(alpha) if measure is None else measure
    q = _quantile(S, S.losses @ w, alpha)
    return tail_gradient_identity(S, w, measure, q - measure.evaluate(S, w), fd_step)


@dataclass
class HomogeneityResult:
    lhs: float
    rhs: float
    stderr: float
    tail_prob_gradient: np.ndarray
    t: float

    @property
    def z_score(self) -> float:
        return float((self.lhs - self.rhs) / self.stderr) if self.stderr > 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs, "rhs": self.rhs, "stderr": self.stderr, "z_score": self.z_score,
            "tail_prob_gradient": self.tail_prob_gradient.tolist(), "t": self.t,
        }


def homogeneity_identity(S, x, measure: RiskMeasure, t: float = 0.0, k: KernelSpec = DEFAULT_KERNEL,
                         fd_step=None) -> HomogeneityResult:
    """For positively homogeneous ``rho``: ``sum_i x_i d/dx_i P[H > t] = t f_H(t)``.

    ``stderr`` treats the scenario-wise contributions to the left-hand side
    as independent draws.
    """
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    if not getattr(measure, "positively_homogeneous", False):
        warnings.warn("measure is not declared positively homogeneous", RuntimeWarning, stacklevel=2)
    steps = default_fd_step(w) if fd_step is None else np.broadcast_to(np.asarray(fd_step, float), w.shape)
    dF, contrib = _tail_prob_gradient(S, measure, w, t, k, steps)
    lhs = float(w @ dF)
    if S.is_uniform:
        se = float(np.std(contrib) / np.sqrt(S.n))
    else:
        se = float(np.sqrt(S.probs**2 @ (contrib - lhs) ** 2))
    H = _h_values(S, measure, w)
    rhs = 0.0 if t == 0 else float(t * kde_density(H, t, k, _probs(S),
                                                       bandwidth=k.resolve(S.losses @ w, _probs(S))))
    return HomogeneityResult(lhs, rhs, se, dF, float(t))


@dataclass
class ConvexityReport:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    cov_eigenvalues: np.ndarray
    tolerance: float
    t: float
    components: dict

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def psd(self) -> bool:
        return self.min_eigenvalue >= -self.tolerance

    @property
    def cov_psd(self) -> bool:
        tr = float(np.sum(self.cov_eigenvalues))
        return float(self.cov_eigenvalues[0]) >= -DEFAULT_TOLERANCES.psd_cov * abs(tr)

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "min_eigenvalue": self.min_eigenvalue,
            "tolerance": self.tolerance,
            "psd": self.psd,
            "cov_psd": self.cov_psd,
            "t": self.t,
            "components": {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.components.items()},
        }


def convexity_check(S, x, measure: RiskMeasure, t: float = 0.0, k: KernelSpec = DEFAULT_KERNEL,
                    fd_step=None) -> ConvexityReport:
    """Assemble the Hessian representation of ``rho`` at level ``t`` and test it for PSD.

    ``[f_H(t) Cov[L|H=t] + dF dF' / f_H(t) - d^2 E[(H-t)^+]] / P[H > t]``

    with the smoothed tail probability ``P[H > t]``, its finite-difference
    gradient ``dF``, and the finite-difference Hessian of the smoothed
    expected excess. The verdict uses the floor ``-1e-6 * |trace|``.
    """
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    probs = _probs(S)
    steps = default_fd_step(w) if fd_step is None else np.broadcast_to(np.asarray(fd_step, float), w.shape)
    rho = measure.evaluate(S, w)
    cm = conditional_moments_at(S, w, rho + t, k)
    H = S.losses @ w - rho
    tail = smoothed_tail_probability(H, t, k, probs, bandwidth=cm.bandwidth)
    dF, _ = _tail_prob_gradient(S, measure, w, t, k, steps)

    def excess(z):
        Hz = _h_values(S, measure, z)
        return smoothed_expected_excess(Hz, t, k, probs, bandwidth=k.resolve(Hz + measure.evaluate(S, z), probs))

    d2G = fd_hessian(excess, w, steps)
    M = (cm.density * cm.cov + np.outer(dF, dF) / cm.density - d2G) / tail
    M = 0.5 * (M + M.T)
    eig = np.linalg.eigvalsh(M)
    tol = DEFAULT_TOLERANCES.psd_convexity * abs(float(np.trace(M)))
    return ConvexityReport(
        M, eig, np.linalg.eigvalsh(cm.cov), tol, float(t),
        {"cov": cm.cov, "density": cm.density, "tail_probability": tail, "tail_prob_gradient": dF,
         "excess_hessian": d2G, "bandwidth": cm.bandwidth},
    )
