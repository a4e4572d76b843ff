"""Value-at-Risk and Expected Shortfall on weighted empirical loss distributions.

The quantile convention is the lower quantile ``inf{t : F(t) >= alpha}``;
no interpolation is done, so the quantile is always one of the scenario
losses (an atom of the empirical law).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import DEFAULT_TOLERANCES
from .scenarios import ScenarioMatrix, as_scenarios, check_alpha, check_weights

__all__ = [
    "quantile_index",
    "lower_quantile",
    "expected_shortfall_from_losses",
    "value_at_risk",
    "expected_shortfall",
    "RiskMeasure",
    "ValueAtRisk",
    "ExpectedShortfall",
    "MeanLoss",
    "ScaledMeasure",
    "FunctionMeasure",
    "AxiomResult",
    "CoherenceReport",
    "coherence_probe",
]


def quantile_index(values: np.ndarray, probs: np.ndarray | None, alpha: float) -> int:
    """Index into ``values`` of the lower ``alpha``-quantile.

    ``probs=None`` means equal weights; that path uses an exact integer rank
    and a selection instead of a full sort.
    """
    n = values.shape[0]
    slack = DEFAULT_TOLERANCES.cdf
    if probs is None:
        # smallest k with k/n >= alpha
        k = int(math.ceil(n * alpha - n * slack))
        k = min(max(k, 1), n)
        idx = np.argpartition(values, k - 1)[k - 1]
        return int(idx)
    order = np.argsort(values, kind="stable")
    cdf = np.cumsum(probs[order])
    j = int(np.searchsorted(cdf, alpha - slack, side="left"))
    return int(order[min(j, n - 1)])


def lower_quantile(values, probs=None, alpha: float = 0.95) -> float:
    """Lower ``alpha``-quantile of a (weighted) sample."""
    v = np.asarray(values, dtype=np.float64)
    p = None if probs is None else np.asarray(probs, dtype=np.float64)
    return float(v[quantile_index(v, p, check_alpha(alpha))])


def expected_shortfall_from_losses(values, probs, alpha: float, q: float | None = None) -> float:
    """Atom-corrected tail mean of a (weighted) sample.

    Uses ``q + E[(L - q)^+] / (1 - alpha)``, which is the same quantity as
    ``(E[L 1{L>=q}] - q (P[L>=q] - (1-alpha))) / (1-alpha)`` with less
    cancellation.
    """
    v = np.asarray(values, dtype=np.float64)
    if q is None:
        q = lower_quantile(v, probs, alpha)
    excess = np.maximum(v - q, 0.0)
    mean_excess = excess.mean() if probs is None else float(np.asarray(probs) @ excess)
    return float(q + mean_excess / (1.0 - alpha))


def _uniform_probs(S: ScenarioMatrix):
    return None if S.is_uniform else S.probs


def value_at_risk(S, x, alpha: float) -> float:
    """Lower ``alpha``-quantile of the portfolio loss ``L(x)``."""
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    alpha = check_alpha(alpha)
    L = S.losses @ w
    return float(L[quantile_index(L, _uniform_probs(S), alpha)])


def expected_shortfall(S, x, alpha: float) -> float:
    """Expected Shortfall of ``L(x)`` at level ``alpha`` (atom-corrected)."""
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    alpha = check_alpha(alpha)
    L = S.losses @ w
    p = _uniform_probs(S)
    q = float(L[quantile_index(L, p, alpha)])
    return expected_shortfall_from_losses(L, p, alpha, q)


# ------------------------------------------------------------ measure objects


class RiskMeasure:
    """A risk measure ``rho(S, x)`` with an optional analytic gradient.

    Subclasses implement :meth:`evaluate`; those that know their gradient
    also implement :meth:`gradient` and set ``has_gradient = True``.
    """

    name = "measure"
    has_gradient = False
    positively_homogeneous = False

    def evaluate(self, S, x) -> float:
        raise NotImplementedError

    def gradient(self, S, x) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no analytic gradient")

    def __call__(self, S, x) -> float:
        return self.evaluate(S, x)

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class ValueAtRisk(RiskMeasure):
    name = "var"
    has_gradient = True
    positively_homogeneous = True

    def __init__(self, alpha: float, tol: float | None = None):
        self.alpha = check_alpha(alpha)
        self.tol = tol

    def evaluate(self, S, x):
        return value_at_risk(S, x, self.alpha)

    def gradient(self, S, x):
        from .discrete import var_gradient_discrete

        return var_gradient_discrete(S, x, self.alpha, self.tol)

    def __repr__(self):
        return f"ValueAtRisk(alpha={self.alpha})"


class ExpectedShortfall(RiskMeasure):
    name = "es"
    has_gradient = True
    positively_homogeneous = True

    def __init__(self, alpha: float, tol: float | None = None):
        self.alpha = check_alpha(alpha)
        self.tol = tol

    def evaluate(self, S, x):
        return expected_shortfall(S, x, self.alpha)

    def gradient(self, S, x):
        from .discrete import es_gradient_discrete

        return es_gradient_discrete(S, x, self.alpha, self.tol)

    def __repr__(self):
        return f"ExpectedShortfall(alpha={self.alpha})"


class MeanLoss(RiskMeasure):
    """``rho(x) = E[L(x)] = mu'x``."""

    name = "mean"
    has_gradient = True
    positively_homogeneous = True

    def evaluate(self, S, x):
        S = as_scenarios(S)
        return float(S.probs @ (S.losses @ check_weights(x, S.d)))

    def gradient(self, S, x):
        return as_scenarios(S).mean()


class ScaledMeasure(RiskMeasure):
    """``lam * base`` for ``lam > 0``."""

    def __init__(self, base: RiskMeasure, lam: float):
        if not lam > 0:
            raise ValueError("scale must be positive")
        self.base = base
        self.lam = float(lam)
        self.name = f"{lam}*{base.name}"
        self.has_gradient = base.has_gradient
        self.positively_homogeneous = base.positively_homogeneous

    def evaluate(self, S, x):
        return self.lam * self.base.evaluate(S, x)

    def gradient(self, S, x):
        return self.lam * np.asarray(self.base.gradient(S, x))


class FunctionMeasure(RiskMeasure):
    """Wrap plain callables ``f(S, x)`` and optionally ``grad(S, x)``."""

    def __init__(self, fn: Callable, grad: Callable | None = None, name: str = "user",
                 positively_homogeneous: bool = False):
        self.fn = fn
        self.grad = grad
        self.name = name
        self.has_gradient = grad is not None
        self.positively_homogeneous = positively_homogeneous

    def evaluate(self, S, x):
        return float(self.fn(S, x))

    def gradient(self, S, x):
        if self.grad is None:
            return super().gradient(S, x)
        return np.asarray(self.grad(S, x), dtype=np.float64)


# ----------------------------------------------------------- coherence probe


@dataclass
class AxiomResult:
    name: str
    passed: bool = True
    n_checks: int = 0
    max_violation: float = 0.0
    counterexamples: list = field(default_factory=list)

    def record(self, violation: float, scale: float, detail: dict, rel: float) -> None:
        self.n_checks += 1
        rel_violation = violation / scale
        self.max_violation = max(self.max_violation, rel_violation)
        if rel_violation > rel:
            self.passed = False
            if len(self.counterexamples) < 10:
                self.counterexamples.append(detail)


@dataclass
class CoherenceReport:
    measure: str
    trials: int
    seed: int
    axioms: dict

    @property
    def coherent(self) -> bool:
        return all(a.passed for a in self.axioms.values())

    def to_dict(self) -> dict:
        return {
            "measure": self.measure,
            "trials": self.trials,
            "seed": self.seed,
            "coherent": self.coherent,
            "axioms": {
                k: {
                    "passed": a.passed,
                    "n_checks": a.n_checks,
                    "max_violation": a.max_violation,
                    "counterexamples": a.counterexamples,
                }
                for k, a in self.axioms.items()
            },
        }


def _random_weights(rng, d):
    while True:
        w = rng.standard_normal(d)
        if np.any(w != 0):
            return w


def coherence_probe(S, measure: RiskMeasure, trials: int = 100, seed: int = 0) -> CoherenceReport:
    """Randomised check of the four coherence axioms.

    * monotonicity: an extra asset column of non-negative losses is switched
      on, which can only raise every scenario loss;
    * translation invariance: a cash column of ones with weight ``c``;
    * positive homogeneity: ``rho(lam x) = lam rho(x)``;
    * subadditivity: ``rho(x + y) <= rho(x) + rho(y)`` over all pairs of
      unit vectors, then random pairs. Violations are returned as
      counterexamples.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    S = as_scenarios(S)
    rng = np.random.default_rng(seed)
    rel = DEFAULT_TOLERANCES.coherence_rel
    res = {k: AxiomResult(k) for k in ("monotonicity", "translation", "subadditivity", "homogeneity")}
    cash = S.with_column(1.0)
    d = S.d

    pairs = []
    eye = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            pairs.append((eye[i], eye[j]))

    for _ in range(trials):
        x = _random_weights(rng, d)
        rx = measure.evaluate(S, x)

        bump = S.with_column(rng.exponential(size=S.n))
        lo = measure.evaluate(bump, np.append(x, 0.0))
        hi = measure.evaluate(bump, np.append(x, 1.0))
        res["monotonicity"].record(
            max(lo - hi, 0.0), 1.0 + abs(lo) + abs(hi), {"x": x.tolist(), "rho_base": lo, "rho_bumped": hi}, rel
        )

        c = float(rng.standard_normal() * (1.0 + abs(rx)))
        shifted = measure.evaluate(cash, np.append(x, c))
        res["translation"].record(
            abs(shifted - (rx + c)), 1.0 + abs(rx) + abs(c), {"x": x.tolist(), "shift": c, "rho": rx, "rho_shifted": shifted}, rel
        )

        lam = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
        scaled = measure.evaluate(S, lam * x)
        res["homogeneity"].record(
            abs(scaled - lam * rx), 1.0 + abs(scaled) + abs(lam * rx), {"x": x.tolist(), "lam": lam, "rho": rx, "rho_scaled": scaled}, rel
        )

        pairs.append((x, _random_weights(rng, d)))

    for x, y in pairs:
        s = x + y
        if not np.any(s != 0):
            continue
        rx, ry, rs = measure.evaluate(S, x), measure.evaluate(S, y), measure.evaluate(S, s)
        res["subadditivity"].record(
            max(rs - rx - ry, 0.0), 1.0 + abs(rx) + abs(ry) + abs(rs),
            {"x": x.tolist(), "y": y.tolist(), "rho_x": rx, "rho_y": ry, "rho_sum": rs}, rel,
        )
    return CoherenceReport(getattr(measure, "name", repr(measure)), trials, seed, res)
