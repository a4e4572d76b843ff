"""Derivatives of risk measures for discrete (scenario) loss distributions.

When the portfolio loss has an atom at the risk level, the gradient of any
risk measure is the conditional mean of the asset losses on that atom, and
all higher derivatives vanish: the empirical measure is locally linear in
the weights between scenario crossings.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_TOLERANCES
from .exceptions import EmptyAtomError, TiePointError
from .measures import quantile_index, value_at_risk
from .scenarios import as_scenarios, check_alpha, check_weights

__all__ = [
    "AtomMatch",
    "default_atom_tol",
    "match_atom",
    "risk_gradient_discrete",
    "var_gradient_discrete",
    "es_gradient_discrete",
    "is_tie_point",
    "HessianProbe",
    "second_derivative_probe",
]


@dataclass(frozen=True)
class AtomMatch:
    """Scenarios whose portfolio loss sits at a level, within ``tol``."""

    tol: float
    indices: np.ndarray
    prob: float

    @property
    def size(self) -> int:
        return int(self.indices.size)


def default_atom_tol(level: float) -> float:
    return DEFAULT_TOLERANCES.atom_rel * (1.0 + abs(level))


def match_atom(L: np.ndarray, probs: np.ndarray, level: float, tol: float | None = None) -> AtomMatch:
    if tol is None:
        tol = default_atom_tol(level)
    if tol < 0:
        raise ValueError("tol must be non-negative")
    idx = np.flatnonzero(np.abs(L - level) <= tol)
    return AtomMatch(float(tol), idx, float(probs[idx].sum()))


def risk_gradient_discrete(S, x, rho_value: float, tol: float | None = None):
    """Gradient of a risk measure whose value ``rho_value`` is an atom of ``L(x)``.

    Returns ``(gradient, atom)`` where ``gradient[i] = E[L_i | L(x) = rho]``,
    the probability-weighted mean of column ``i`` over the matched scenarios.

    Raises
    ------
    EmptyAtomError
        No scenario loss lies within ``tol`` of ``rho_value``.
    """
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    L = S.losses @ w
    atom = match_atom(L, S.probs, float(rho_value), tol)
    if atom.size == 0 or atom.prob <= 0.0:
        raise EmptyAtomError(
            f"no scenario with positive probability has L(x) within {atom.tol:g} of {rho_value!r}"
        )
    p = S.probs[atom.indices]
    grad = (p @ S.losses[atom.indices]) / atom.prob
    return grad, atom


def var_gradient_discrete(S, x, alpha: float, tol: float | None = None) -> np.ndarray:
    """``d VaR_alpha / dx_i = E[L_i | L(x) = q_alpha(x)]``."""
    q = value_at_risk(S, x, alpha)
    try:
        grad, _ = risk_gradient_discrete(S, x, q, tol)
    except EmptyAtomError as exc:  # pragma: no cover - the lower quantile is always an atom
        raise AssertionError(f"lower quantile is not an atom: {exc}") from exc
    return grad


def es_gradient_discrete(S, x, alpha: float, tol: float | None = None) -> np.ndarray:
    """ES gradient with the atom correction.

    ``(E[L_i 1{L>=q}] - dq/dx_i (P[L>=q] - (1-alpha))) / (1-alpha)``
    """
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    alpha = check_alpha(alpha)
    L = S.losses @ w
    q = float(L[quantile_index(L, None if S.is_uniform else S.probs, alpha)])
    dq, _ = risk_gradient_discrete(S, w, q, tol)
    tail = L >= q
    pt = S.probs[tail]
    tail_mean = pt @ S.losses[tail]
    excess_prob = float(pt.sum()) - (1.0 - alpha)
    return (tail_mean - dq * excess_prob) / (1.0 - alpha)


def is_tie_point(S, x, alpha: float, h: float, tol: float | None = None) -> bool:
    """True if scenario losses may cross at the quantile within a stencil of half-width ``h``.

    Every ``L_k`` moves by at most ``2 h max|losses|`` when two weights are
    perturbed by ``h``, so two scenarios separated by more than twice that
    keep their order. Scenarios sharing the atom but with different loss
    rows are also a tie: they separate under any perturbation.
    """
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    L = S.losses @ w
    q = float(L[quantile_index(L, None if S.is_uniform else S.probs, check_alpha(alpha))])
    atom = match_atom(L, S.probs, q, tol)
    rows = S.losses[atom.indices]
    if atom.size > 1 and np.any(rows != rows[0]):
        return True
    margin = 4.0 * h * float(np.max(np.abs(S.losses)))
    others = np.delete(L, atom.indices)
    if others.size == 0:
        return False
    return bool(np.min(np.abs(others - q)) <= margin)


@dataclass
class HessianProbe:
    var_hessian: np.ndarray
    es_hessian: np.ndarray
    h: float
    tie_point: bool

    @property
    def reliable(self) -> bool:
        return not self.tie_point

    @property
    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.var_hessian)), np.max(np.abs(self.es_hessian))))


def second_derivative_probe(S, x, alpha: float, h: float = 1e-4, strict: bool = False) -> HessianProbe:
    """Finite-difference Hessians of empirical VaR and ES.

    Away from scenario crossings both measures are linear in the weights,
    so every entry is zero up to rounding. At a tie point the result is
    returned with ``tie_point=True`` (or :class:`TiePointError` is raised
    when ``strict``).

    Away from crossings the second difference of a linear function is
    zero in exact arithmetic but leaves rounding noise of order
    ``eps |rho| / h^2`` in float64, which exceeds 1e-8 for ``h = 1e-4``.
    The stencil is therefore evaluated in extended precision
    (``np.longdouble``; identical to float64 on platforms without it), and
    the step is rounded to the nearest power of two so ``x +- h`` is exact
    for weights on a binary grid.
    """
    from .oracles import fd_hessian

    S = as_scenarios(S)
    w = check_weights(x, S.d)
    alpha = check_alpha(alpha)
    if not h > 0:
        raise ValueError("h must be positive")
    h = float(2.0 ** np.round(np.log2(h)))
    tie = is_tie_point(S, w, alpha, h)
    if tie and strict:
        raise TiePointError(f"scenario losses cross near the {alpha} quantile within step {h}")
    ld = np.longdouble
    X = S.losses.astype(ld)
    p = None if S.is_uniform else S.probs.astype(ld)
    tail = ld(1.0) - ld(alpha)

    def var_ld(z):
        L = X @ z
        return L[quantile_index(L, p, alpha)]

    def es_ld(z):
        L = X @ z
        q = L[quantile_index(L, p, alpha)]
        excess = np.maximum(L - q, ld(0.0))
        mean_excess = excess.mean() if p is None else p @ excess
        return q + mean_excess / tail

    hv = fd_hessian(var_ld, w, h, dtype=ld)
    he = fd_hessian(es_ld, w, h, dtype=ld)
    return HessianProbe(hv, he, h, tie)
