"""Heavy-tail diagnostics: tail index, regular variation and limit-ratio ladders.

For a portfolio loss that is regularly varying with index ``kappa``:

* ``ES_alpha / VaR_alpha -> kappa / (kappa - 1)``, and the same holds
  componentwise for the gradients;
* ``E[L_i L_j | L >= q] / E[L_i L_j | L = q] -> kappa / (kappa - 2)``;
* conditional correlations given ``L >= q`` tend to 1 when the components
  share one heavy-tailed driver.

"alpha -> 1" is made concrete as a fixed ladder of levels; a ladder is
called converged when its last point is within tolerance of the limit.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .continuous import es_gradient_tail, var_gradient_kernel
from .exceptions import EmptyTailError
from .kernels import DEFAULT_KERNEL, KernelSpec, conditional_moments_at, kde_density
from .measures import expected_shortfall, lower_quantile, value_at_risk
from .oracles import (
    EllipticalModel,
    HeavyTailModel,
    elliptical_gradients,
    elliptical_var_es,
    sample,
)
from .scenarios import ScenarioMatrix, as_scenarios, check_alpha, check_weights

__all__ = [
    "DEFAULT_LADDER",
    "TailIndexEstimate",
    "hill_estimator",
    "default_k_order",
    "RatioLadder",
    "regular_variation_probe",
    "conditional_mean_levels",
    "es_var_ratio_ladder",
    "second_moment_ratio_ladder",
    "TailCorrelation",
    "tail_correlation",
    "tail_correlation_ladder",
    "tail_probability_forms",
    "TailReport",
]

DEFAULT_LADDER = (0.9, 0.95, 0.99, 0.999, 0.9999)
MIN_TAIL = 100


# ---------------------------------------------------------------- tail index


@dataclass(frozen=True)
class TailIndexEstimate:
    """Hill estimate ``kappa_hat`` from the ``k_order`` largest observations."""

    kappa_hat: float
    k_order: int
    stderr: float
    n: int

    def to_dict(self) -> dict:
        return {"kappa_hat": self.kappa_hat, "k_order": self.k_order, "stderr": self.stderr, "n": self.n}


def default_k_order(n: int) -> int:
    # the small offset keeps exact powers such as 10**5 -> 1000 from rounding down
    return max(1, min(int(np.floor(n**0.6 * (1 + 1e-12))), n - 1))


def hill_estimator(sample_values, k_order: int | None = None) -> TailIndexEstimate:
    """Hill estimator of the tail index.

    ``kappa_hat = k / sum_{j=1..k} log(X_(n-j+1) / X_(n-k))`` on the
    descending order statistics; ``stderr = kappa_hat / sqrt(k)``.

    Parameters
    ----------
    sample_values : array_like
        Positive losses (only the top ``k_order + 1`` need be positive).
    k_order : int, optional
        Number of upper order statistics; default ``floor(n**0.6)``.
    """
    v = np.asarray(sample_values, dtype=np.float64).reshape(-1)
    n = v.shape[0]
    if n < 2:
        raise ValueError("Hill estimator needs at least two observations")
    if not np.all(np.isfinite(v)):
        raise ValueError("sample contains non-finite values")
    k = default_k_order(n) if k_order is None else int(k_order)
    if not 1 <= k < n:
        raise ValueError(f"k_order must be in [1, {n - 1}], got {k}")
    top = np.partition(v, n - k - 1)[n - k - 1:]
    threshold = top.min()
    if not threshold > 0:
        raise ValueError(f"order statistic X_(n-k) = {threshold!r} is not positive")
    logs = np.log(top) - np.log(threshold)
    s = float(logs.sum())
    if not s > 0:
        raise ValueError("top order statistics are all equal; tail index undefined")
    kappa = k / s
    return TailIndexEstimate(float(kappa), k, float(kappa / np.sqrt(k)), n)


# -------------------------------------------------------------------- ladders


@dataclass
class RatioLadder:
    """A limit ratio evaluated along increasing confidence levels."""

    name: str
    alphas: np.ndarray
    ratios: np.ndarray
    target: float
    tol: float
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        self.ratios = np.asarray(self.ratios, dtype=np.float64)
        if self.alphas.shape != self.ratios.shape:
            raise ValueError("alphas and ratios must have the same length")
        if np.any(np.diff(self.alphas) <= 0):
            raise ValueError("alphas must be strictly increasing")

    @property
    def rel_errors(self) -> np.ndarray:
        return np.abs(self.ratios - self.target) / abs(self.target)

    @property
    def within_tol(self) -> np.ndarray:
        return self.rel_errors <= self.tol

    @property
    def converged(self) -> bool:
        return bool(self.within_tol[-1])

    @property
    def monotone(self) -> bool:
        """Distance to the target never increases along the ladder."""
        return bool(np.all(np.diff(np.abs(self.ratios - self.target)) <= 0))

    @property
    def strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.ratios) > 0))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "alphas": self.alphas.tolist(),
            "ratios": self.ratios.tolist(),
            "target": self.target,
            "tol": self.tol,
            "rel_errors": self.rel_errors.tolist(),
            "converged": self.converged,
            "monotone": self.monotone,
            "details": _jsonable(self.details),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _check_alphas(alphas):
    a = np.asarray([check_alpha(v) for v in alphas], dtype=np.float64)
    if a.size == 0:
        raise ValueError("empty alpha grid")
    return a


def _model_kappa(model) -> float:
    if isinstance(model, HeavyTailModel):
        return float(model.kappa)
    if isinstance(model, EllipticalModel):
        return np.inf if model.family == "gaussian" else float(model.nu)
    raise TypeError(f"no tail index for {type(model).__name__}")


def _as_sample(source, n, seed, n_jobs=1) -> ScenarioMatrix:
    if isinstance(source, (HeavyTailModel, EllipticalModel)):
        if n is None:
            raise ValueError("n is required to sample from a model")
        return ScenarioMatrix(sample(source, n, seed, n_jobs))
    return as_scenarios(source)


def _default_x(source):
    d = source.d
    return np.ones(d)


def regular_variation_probe(S, x, lam: float, levels, k: KernelSpec = DEFAULT_KERNEL) -> dict:
    """``E[L_i | L(x) = lam t] / E[L_i | L(x) = t]`` per level ``t`` and asset ``i``.

    Regular variation of index 1 for the conditional mean predicts ``lam``
    at large ``t``. The bandwidth is the rule applied to the whole sample
    and is shared by both levels.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    L = S.losses @ w
    h = k.resolve(L, None if S.is_uniform else S.probs)
    levels = np.asarray(levels, dtype=np.float64).reshape(-1)
    ratios = np.empty((levels.size, S.d))
    for j, t in enumerate(levels):
        lo = conditional_moments_at(S, w, t, k, bandwidth=h).mean
        hi = lo if lam == 1 else conditional_moments_at(S, w, lam * t, k, bandwidth=h).mean
        ratios[j] = hi / lo
    return {"lam": float(lam), "levels": levels, "ratios": ratios, "bandwidth": h}


def _level_constants(model, w):
    """Comonotonic solution ``l^i = scales_i / sum_j x_j scales_j``."""
    c = float(w @ model.scales)
    return model.scales / c, c


def conditional_mean_levels(model: HeavyTailModel, x, levels, n: int, seed: int = 0,
                            k: KernelSpec = DEFAULT_KERNEL, n_jobs: int = 1) -> dict:
    """Kernel ``E[L_i | L(x) = t]`` and tail ``E[L_i | L(x) >= t]`` per level.

    References are ``l^i t`` and ``kappa/(kappa-1) l^i t`` with
    ``l^i = scales_i / sum_j x_j scales_j``. They are exact for the
    comonotonic model (``asserted=True``); for other models they are only a
    diagnostic: independent heavy tails with unequal weights follow a
    different constant (one large component dominates the sum).
    """
    if not isinstance(model, HeavyTailModel):
        raise TypeError("conditional_mean_levels needs a HeavyTailModel")
    w = check_weights(x, model.d)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    S = _as_sample(model, n, seed, n_jobs)
    L = S.losses @ w
    h = k.resolve(L)
    ell, _ = _level_constants(model, w)
    levels = np.asarray(levels, dtype=np.float64).reshape(-1)
    kappa = float(model.kappa)
    at, above, n_tail = [], [], []
    for t in levels:
        at.append(conditional_moments_at(S, w, t, k, bandwidth=h).mean)
        mask = L >= t
        if not np.any(mask):
            raise EmptyTailError(f"no sample has L(x) >= {t}")
        above.append(S.losses[mask].mean(axis=0))
        n_tail.append(int(mask.sum()))
    at = np.array(at)
    above = np.array(above)
    ref_at = np.outer(levels, ell)
    ref_above = ref_at * (kappa / (kappa - 1.0)) if kappa > 1 else np.full_like(ref_at, np.nan)
    return {
        "levels": levels,
        "at_level": at,
        "above_level": above,
        "reference_at": ref_at,
        "reference_above": ref_above,
        "ratio_at": at / ref_at,
        "ratio_above": above / ref_at,
        "n_tail": n_tail,
        "bandwidth": h,
        "asserted": model.kind == "comonotonic_pareto",
    }


def _analytic_var_es(source, w, alpha):
    if isinstance(source, EllipticalModel):
        return elliptical_var_es(source, w, alpha)
    if isinstance(source, HeavyTailModel):
        return source.var_es(w, alpha)
    return None


def _analytic_grad_ratio(source, w, alpha):
    if isinstance(source, EllipticalModel):
        gv, ge, _ = elliptical_gradients(source, w, alpha)
        return ge / gv
    if isinstance(source, HeavyTailModel) and source.kind in ("comonotonic_pareto", "multivariate_student_t"):
        # both gradients are proportional to the same vector, so the ratio is ES/VaR
        var, es = source.var_es(w, alpha)
        return np.full(source.d, es / var)
    return None


def es_var_ratio_ladder(source, x=None, alphas=DEFAULT_LADDER, n: int | None = None, seed: int = 0,
                        tol: float = 0.03, gradients: bool = False, k: KernelSpec = DEFAULT_KERNEL,
                        n_jobs: int = 1) -> RatioLadder:
    """``ES_alpha / VaR_alpha`` along ``alphas``; target ``kappa / (kappa - 1)``.

    ``source`` is a model or a sample. Models with closed forms
    (comonotonic Pareto, multivariate Student-t, elliptical) are evaluated
    analytically; ``iid_pareto`` is sampled with ``(n, seed)``. For a plain
    sample the target uses the Hill estimate of ``L(x)``. A Gaussian model
    has target 1.

    With ``gradients=True`` the componentwise ratios
    ``dES/dx_i / dVaR/dx_i`` are stored in ``details["gradient_ratios"]``.
    """
    a = _check_alphas(alphas)
    analytic = isinstance(source, EllipticalModel) or (
        isinstance(source, HeavyTailModel) and source.kind != "iid_pareto"
    )
    if isinstance(source, (HeavyTailModel, EllipticalModel)):
        kappa = _model_kappa(source)
        w = check_weights(_default_x(source) if x is None else x, source.d)
    else:
        S = as_scenarios(source)
        w = check_weights(np.ones(S.d) if x is None else x, S.d)
        kappa = hill_estimator(S.losses @ w).kappa_hat
    if not kappa > 1:
        raise ValueError("ES/VaR limit requires kappa > 1")
    target = 1.0 if np.isinf(kappa) else kappa / (kappa - 1.0)
    details = {"kappa": kappa if np.isfinite(kappa) else None, "analytic": analytic}
    ratios, grad_ratios = [], []
    if analytic:
        for alpha in a:
            var, es = _analytic_var_es(source, w, alpha)
            ratios.append(es / var)
            if gradients:
                grad_ratios.append(_analytic_grad_ratio(source, w, alpha))
    else:
        S = _as_sample(source, n, seed, n_jobs)
        details["n"] = S.n
        details["seed"] = seed if isinstance(source, HeavyTailModel) else None
        for alpha in a:
            ratios.append(expected_shortfall(S, w, alpha) / value_at_risk(S, w, alpha))
            if gradients:
                grad_ratios.append(es_gradient_tail(S, w, alpha) / var_gradient_kernel(S, w, alpha, k))
    if gradients:
        details["gradient_ratios"] = np.array(grad_ratios)
    return RatioLadder("es_var", a, np.array(ratios), float(target), tol, details)


def second_moment_ratio_ladder(model: HeavyTailModel, x=None, alphas=(0.99, 0.999), n: int = 10**6,
                               seed: int = 0, tol: float = 0.10, k: KernelSpec = DEFAULT_KERNEL,
                               n_jobs: int = 1) -> RatioLadder:
    """``E[L(x)^2 | L(x) >= q] / E[L(x)^2 | L(x) = q]`` along ``alphas``; target ``kappa/(kappa-2)``.

    The at-level moment is a kernel estimate at the sample quantile. The
    componentwise ratios ``E[L_i L_j | L >= q] / E[L_i L_j | L = q]`` and,
    for the comonotonic model, the level form
    ``E[L_i L_j | L = q] / (l^i l^j q^2)`` (limit 1) are in ``details``.
    """
    kappa = _model_kappa(model)
    if not kappa > 2:
        raise ValueError(f"second-moment ratio requires κ>2, got kappa={kappa}")
    a = _check_alphas(alphas)
    w = check_weights(_default_x(model) if x is None else x, model.d)
    S = _as_sample(model, n, seed, n_jobs)
    L = S.losses @ w
    h = k.resolve(L)
    ratios, comp, level_form, n_tail = [], [], [], []
    for alpha in a:
        q = lower_quantile(L, None, alpha)
        tail = L >= q
        Xt = S.losses[tail]
        above = Xt.T @ Xt / Xt.shape[0]
        # kernel second moments at L(x) = q: Cov + mean mean'
        cm = conditional_moments_at(S, w, q, k, bandwidth=h)
        at = cm.cov + np.outer(cm.mean, cm.mean)
        ratios.append(float(w @ above @ w) / float(w @ at @ w))
        comp.append(above / at)
        n_tail.append(int(tail.sum()))
        if model.kind == "comonotonic_pareto":
            ell, _ = _level_constants(model, w)
            level_form.append(at / (np.outer(ell, ell) * q * q))
    details = {"kappa": kappa, "n": S.n, "seed": seed, "bandwidth": h, "component_ratios": np.array(comp),
               "n_tail": n_tail}
    if level_form:
        details["level_form"] = np.array(level_form)
    return RatioLadder("second_moment", a, np.array(ratios), kappa / (kappa - 2.0), tol, details)


# --------------------------------------------------------- tail correlations


@dataclass
class TailCorrelation:
    matrix: np.ndarray
    alpha: float
    n_tail: int
    degenerate_pairs: list
    warnings: list = field(default_factory=list)

    @property
    def distance_from_ones(self) -> float:
        return float(np.max(np.abs(self.matrix - 1.0)))

    @property
    def min_off_diagonal(self) -> float:
        d = self.matrix.shape[0]
        if d < 2:
            return 1.0
        return float(self.matrix[~np.eye(d, dtype=bool)].min())

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "alpha": self.alpha,
            "n_tail": self.n_tail,
            "distance_from_ones": self.distance_from_ones,
            "degenerate_pairs": self.degenerate_pairs,
            "warnings": list(self.warnings),
        }


def _proportional(a, b) -> bool:
    """Columns equal up to a positive factor, to rounding."""
    i = int(np.argmax(np.abs(a)))
    if a[i] == 0 or b[i] == 0:
        return False
    r = b[i] / a[i]
    return r > 0 and bool(np.allclose(b, r * a, rtol=1e-12, atol=0.0))


def _tail_corr_matrix(Xt):
    d = Xt.shape[1]
    sd = Xt.std(axis=0)
    R = np.corrcoef(Xt, rowvar=False) if d > 1 else np.ones((1, 1))
    R = np.atleast_2d(R)
    degenerate = []
    for i in range(d):
        for j in range(i + 1, d):
            if sd[i] == 0 or sd[j] == 0 or _proportional(Xt[:, i], Xt[:, j]):
                R[i, j] = R[j, i] = 1.0
                degenerate.append([i, j])
    np.fill_diagonal(R, 1.0)
    return R, degenerate


def tail_correlation(source, x=None, alpha: float = 0.99, n: int | None = None, seed: int = 0,
                     n_jobs: int = 1) -> TailCorrelation:
    """Correlation matrix of the columns given ``L(x) >= q_alpha``.

    Comonotonic or constant columns have undefined or rounding-affected
    correlation; they are reported as exactly 1 (``degenerate_pairs``).
    Fewer than 100 tail observations triggers a warning.

    Raises
    ------
    EmptyTailError
        No observation in the tail event.
    """
    alpha = check_alpha(alpha)
    if isinstance(source, HeavyTailModel) and source.kind == "comonotonic_pareto":
        d = source.d
        pairs = [[i, j] for i in range(d) for j in range(i + 1, d)]
        return TailCorrelation(np.ones((d, d)), alpha, -1, pairs)
    S = _as_sample(source, n, seed, n_jobs)
    w = check_weights(np.ones(S.d) if x is None else x, S.d)
    L = S.losses @ w
    q = lower_quantile(L, None if S.is_uniform else S.probs, alpha)
    tail = L >= q
    Xt = S.losses[tail]
    if Xt.shape[0] == 0:
        raise EmptyTailError(f"no sample in the {alpha} tail")
    notes = []
    if Xt.shape[0] < MIN_TAIL:
        msg = f"only {Xt.shape[0]} tail observations at alpha={alpha}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    R, degenerate = _tail_corr_matrix(Xt)
    return TailCorrelation(R, alpha, int(Xt.shape[0]), degenerate, notes)


def tail_correlation_ladder(source, x=None, alphas=(0.9, 0.99, 0.999), n: int | None = None, seed: int = 0,
                            tol: float = 0.05, n_jobs: int = 1) -> RatioLadder:
    """Smallest off-diagonal tail correlation along ``alphas``; target 1.

    A model is sampled once and every level uses the same sample.
    """
    a = _check_alphas(alphas)
    if isinstance(source, HeavyTailModel) and source.kind == "comonotonic_pareto":
        mats = [tail_correlation(source, x, al) for al in a]
    else:
        S = _as_sample(source, n, seed, n_jobs)
        mats = [tail_correlation(S, x, al) for al in a]
    ratios = np.array([m.min_off_diagonal for m in mats])
    details = {"matrices": np.array([m.matrix for m in mats]), "n_tail": [m.n_tail for m in mats],
               "n": n, "seed": seed}
    return RatioLadder("tail_correlation", a, ratios, 1.0, tol, details)


# ------------------------------------------------------ tail probability forms


def tail_probability_forms(model: HeavyTailModel, x, levels, n: int = 10**6, seed: int = 0,
                           k: KernelSpec = DEFAULT_KERNEL, n_jobs: int = 1) -> dict:
    """Compare sample tail probability and density of ``L(x)`` with the power-law forms.

    For the comonotonic Pareto model ``L(x) = c Z`` with
    ``c = sum_i x_i scales_i``, so ``P[L > t] = (t/c)^-kappa`` and
    ``f(t) = kappa t^(-kappa-1) c^kappa`` for ``t >= c``. Levels below ``c``
    are flagged ``pre_asymptotic``.
    """
    if not isinstance(model, HeavyTailModel) or model.kind != "comonotonic_pareto":
        raise ValueError("tail_probability_forms needs a comonotonic_pareto model")
    if not model.kappa > 1:
        raise ValueError("tail_probability_forms needs kappa > 1")
    w = check_weights(x, model.d)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    kappa = float(model.kappa)
    c = float(w @ model.scales)
    S = _as_sample(model, n, seed, n_jobs)
    L = S.losses @ w
    h = k.resolve(L)
    levels = np.asarray(levels, dtype=np.float64).reshape(-1)
    rows = []
    for t in levels:
        emp_tail = float(np.mean(L > t))
        emp_dens = kde_density(L, t, k, bandwidth=h)
        pre = bool(t < c)
        form_tail = 1.0 if pre else (t / c) ** (-kappa)
        form_dens = 0.0 if pre else kappa * t ** (-kappa - 1.0) * c**kappa
        rows.append({
            "t": float(t),
            "pre_asymptotic": pre,
            "tail_empirical": emp_tail,
            "tail_form": form_tail,
            "tail_rel_error": abs(emp_tail - form_tail) / form_tail if form_tail > 0 else None,
            "density_kde": emp_dens,
            "density_form": form_dens,
            "density_rel_error": abs(emp_dens - form_dens) / form_dens if form_dens > 0 else None,
        })
    return {"kappa": kappa, "c": c, "n": S.n, "seed": seed, "bandwidth": h, "levels": rows}


# --------------------------------------------------------------------- report


@dataclass
class TailReport:
    """Tail-index estimate plus limit-ratio ladders for one model or sample."""

    hill: TailIndexEstimate | None
    ladders: dict

    def to_dict(self) -> dict:
        return {
            "hill": None if self.hill is None else self.hill.to_dict(),
            "ladders": {k: v.to_dict() for k, v in self.ladders.items()},
        }
