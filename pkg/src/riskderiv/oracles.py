"""Ground truth for the estimators.

* closed-form VaR/ES, gradients and ES Hessian for elliptical (Gaussian and
  Student-t) loss vectors;
* central finite differences;
* seeded, chunked samplers for elliptical and heavy-tailed models.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .measures import RiskMeasure
from .scenarios import check_alpha, check_weights

__all__ = [
    "EllipticalModel",
    "HeavyTailModel",
    "standardized_var_es",
    "elliptical_var_es",
    "elliptical_gradients",
    "EllipticalMeasure",
    "pareto_var_es",
    "fd_gradient",
    "fd_hessian",
    "sample",
    "CHUNK_ROWS",
]

CHUNK_ROWS = 1 << 16


@dataclass(frozen=True)
class EllipticalModel:
    """Gaussian or Student-t loss vector with mean ``mu`` and covariance ``sigma``.

    For ``family="student_t"`` the generator is scaled to unit variance, so
    ``sigma`` stays the covariance; this needs ``nu > 2``.
    """

    mu: np.ndarray
    sigma: np.ndarray
    family: str = "gaussian"
    nu: float | None = None
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        d = mu.shape[0]
        if sigma.shape != (d, d):
            raise ValueError(f"sigma must have shape ({d}, {d}), got {sigma.shape}")
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
            raise ValueError("sigma is not symmetric")
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ValueError("sigma is not positive definite") from None
        if self.family not in ("gaussian", "student_t"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "student_t" and (self.nu is None or not self.nu > 2):
            raise ValueError("student_t needs nu > 2 for a finite covariance")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "chol", chol)

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    def portfolio_scale(self, x) -> float:
        w = check_weights(x, self.d)
        return float(np.sqrt(w @ self.sigma @ w))

    def _draw(self, rng: np.random.Generator, m: int) -> np.ndarray:
        z = rng.standard_normal((m, self.d)) @ self.chol.T
        if self.family == "student_t":
            w = rng.chisquare(self.nu, m)
            z *= np.sqrt((self.nu - 2.0) / w)[:, None]
        return z + self.mu


@dataclass(frozen=True)
class HeavyTailModel:
    """Heavy-tailed generators with tail index ``kappa``.

    ``iid_pareto``
        independent columns ``scales_i * Z_i``, ``Z_i ~ Pareto(kappa)`` on
        ``[1, inf)``.
    ``comonotonic_pareto``
        ``L_i = scales_i * Z`` for one Pareto driver ``Z``.
    ``multivariate_student_t``
        ``kappa`` degrees of freedom, dispersion
        ``diag(scales) R diag(scales)`` with ``R`` built from ``corr``.
    """

    kind: str
    kappa: float
    scales: np.ndarray
    corr: object = 0.0

    def __post_init__(self):
        if self.kind not in ("iid_pareto", "comonotonic_pareto", "multivariate_student_t"):
            raise ValueError(f"unknown heavy-tail model {self.kind!r}")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        s = np.asarray(self.scales, dtype=np.float64).reshape(-1)
        if s.size == 0 or np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ValueError("scales must be positive")
        object.__setattr__(self, "scales", s)
        if self.kind == "multivariate_student_t":
            R = self.correlation_matrix()
            try:
                np.linalg.cholesky(R)
            except np.linalg.LinAlgError:
                raise ValueError("correlation matrix is not positive definite") from None

    @property
    def d(self) -> int:
        return self.scales.shape[0]

    def correlation_matrix(self) -> np.ndarray:
        c = np.asarray(self.corr, dtype=np.float64)
        if c.ndim == 0:
            R = np.full((self.d, self.d), float(c))
            np.fill_diagonal(R, 1.0)
            return R
        return c

    def dispersion(self) -> np.ndarray:
        return self.correlation_matrix() * np.outer(self.scales, self.scales)

    def _draw(self, rng: np.random.Generator, m: int) -> np.ndarray:
        if self.kind == "iid_pareto":
            return (rng.pareto(self.kappa, (m, self.d)) + 1.0) * self.scales
        if self.kind == "comonotonic_pareto":
            z = rng.pareto(self.kappa, m) + 1.0
            return z[:, None] * self.scales
        A = np.linalg.cholesky(self.dispersion())
        z = rng.standard_normal((m, self.d)) @ A.T
        w = rng.chisquare(self.kappa, m)
        return z * np.sqrt(self.kappa / w)[:, None]

    def var_es(self, x, alpha: float):
        """Closed-form ``(VaR, ES)`` of ``L(x)`` where one exists, else ``None``."""
        w = check_weights(x, self.d)
        alpha = check_alpha(alpha)
        if self.kind == "comonotonic_pareto":
            c = float(w @ self.scales)
            if c <= 0:
                return None
            return pareto_var_es(self.kappa, alpha, c)
        if self.kind == "multivariate_student_t":
            s = float(np.sqrt(w @ self.dispersion() @ w))
            q, es = standardized_var_es("student_t", alpha, self.kappa, unit_variance=False)
            return s * q, s * es
        return None


def standardized_var_es(family: str, alpha: float, nu: float | None = None, unit_variance: bool = True):
    """VaR and ES of the standard Gaussian or Student-t law.

    With ``unit_variance`` the Student-t law is rescaled by
    ``sqrt((nu-2)/nu)``; otherwise it is the plain ``t_nu`` law, which only
    needs ``nu > 1`` for the ES.
    """
    alpha = check_alpha(alpha)
    if family == "gaussian":
        z = stats.norm.ppf(alpha)
        return float(z), float(stats.norm.pdf(z) / (1.0 - alpha))
    if family != "student_t":
        raise ValueError(f"unknown family {family!r}")
    if nu is None or not nu > 1:
        raise ValueError("Student-t ES needs nu > 1")
    t = stats.t.ppf(alpha, nu)
    es = stats.t.pdf(t, nu) * (nu + t * t) / ((nu - 1.0) * (1.0 - alpha))
    if unit_variance:
        if not nu > 2:
            raise ValueError("unit-variance Student-t needs nu > 2")
        s = np.sqrt((nu - 2.0) / nu)
        return float(s * t), float(s * es)
    return float(t), float(es)


def pareto_var_es(kappa: float, alpha: float, scale: float = 1.0):
    """VaR and ES of ``scale * Z`` with ``P[Z > z] = z^-kappa`` on ``[1, inf)``."""
    if not kappa > 1:
        raise ValueError("Pareto ES needs kappa > 1")
    var = scale * (1.0 - check_alpha(alpha)) ** (-1.0 / kappa)
    return float(var), float(kappa / (kappa - 1.0) * var)


def _std_constants(m: EllipticalModel, alpha: float):
    return standardized_var_es(m.family, alpha, m.nu, unit_variance=True)


def elliptical_var_es(m: EllipticalModel, x, alpha: float):
    """``(VaR, ES) = mu'x + sqrt(x' Sigma x) * (q_std, es_std)``."""
    w = check_weights(x, m.d)
    q, es = _std_constants(m, alpha)
    sp = m.portfolio_scale(w)
    loc = float(m.mu @ w)
    return loc + sp * q, loc + sp * es


def elliptical_gradients(m: EllipticalModel, x, alpha: float):
    """Exact ``(var_grad, es_grad, es_hessian)`` for an elliptical model.

    The ES Hessian is ``es_std`` times the Hessian of ``sqrt(x' Sigma x)``,
    ``(Sigma - Sigma x x' Sigma / s^2) / s``.
    """
    w = check_weights(x, m.d)
    q, es = _std_constants(m, alpha)
    sx = m.sigma @ w
    sp = float(np.sqrt(w @ sx))
    unit = sx / sp
    hess_scale = (m.sigma - np.outer(sx, sx) / sp**2) / sp
    hess_scale = 0.5 * (hess_scale + hess_scale.T)
    return m.mu + q * unit, m.mu + es * unit, es * hess_scale


class EllipticalMeasure(RiskMeasure):
    """Closed-form VaR or ES of an elliptical model, usable as a :class:`RiskMeasure`.

    The scenario argument is ignored; pair it with samples drawn from the
    same model to test sample-based identities against exact values.
    """

    has_gradient = True
    positively_homogeneous = True

    def __init__(self, model: EllipticalModel, alpha: float, kind: str = "es"):
        if kind not in ("var", "es"):
            raise ValueError("kind must be 'var' or 'es'")
        self.model = model
        self.alpha = check_alpha(alpha)
        self.kind = kind
        self.name = f"elliptical_{kind}"

    def evaluate(self, S, x):
        var, es = elliptical_var_es(self.model, x, self.alpha)
        return var if self.kind == "var" else es

    def gradient(self, S, x):
        gv, ge, _ = elliptical_gradients(self.model, x, self.alpha)
        return gv if self.kind == "var" else ge

    def hessian(self, S, x):
        _, _, he = elliptical_gradients(self.model, x, self.alpha)
        if self.kind == "es":
            return he
        q, es = _std_constants(self.model, self.alpha)
        return he * (q / es)


# --------------------------------------------------------- finite differences


def _steps(h, d):
    h = np.broadcast_to(np.asarray(h, dtype=np.float64), (d,))
    if np.any(h <= 0):
        raise ValueError("finite-difference steps must be positive")
    return h


def fd_gradient(f, x, h=1e-5) -> np.ndarray:
    """Central-difference gradient. ``h`` may be a scalar or one step per coordinate.

    Sample-based ``f`` must reuse one fixed sample (common random numbers).
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    h = _steps(h, d)
    g = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h[i]
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h[i])
    return g


def fd_hessian(f, x, h=1e-4, dtype=np.float64) -> np.ndarray:
    """Hessian by nested central differences, symmetrised.

    ``dtype`` sets the precision of the stencil points and the difference
    quotients (``np.longdouble`` for extended precision where available);
    the result is returned as float64.
    """
    x = np.asarray(x, dtype=dtype)
    d = x.shape[0]
    h = _steps(h, d).astype(dtype)
    H = np.empty((d, d))
    for i in range(d):
        ei = np.zeros(d, dtype=dtype)
        ei[i] = h[i]
        for j in range(i, d):
            ej = np.zeros(d, dtype=dtype)
            ej[j] = h[j]
            val = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * h[i] * h[j])
            H[i, j] = H[j, i] = val
    return H


# -------------------------------------------------------------------- sampler


def sample(model, n: int, seed: int, n_jobs: int = 1) -> np.ndarray:
    """Draw an ``n x d`` sample.

    Rows are produced in chunks of :data:`CHUNK_ROWS`; chunk ``c`` uses its
    own stream seeded by ``SeedSequence(seed, spawn_key=(c,))``. The output
    is therefore identical bit for bit for any ``n_jobs``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not hasattr(model, "_draw"):
        raise TypeError(f"cannot sample from {type(model).__name__}")
    out = np.empty((n, model.d))
    starts = list(range(0, n, CHUNK_ROWS))

    def fill(c):
        lo = starts[c]
        hi = min(lo + CHUNK_ROWS, n)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(c,))))
        out[lo:hi] = model._draw(rng, hi - lo)

    if n_jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(fill, range(len(starts))))
    else:
        for c in range(len(starts)):
            fill(c)
    return out
