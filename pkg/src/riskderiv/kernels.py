"""Kernel smoothing at a level of the portfolio loss.

Provides the kernel density of ``L(x)``, the Nadaraya-Watson conditional
mean and covariance of the asset losses given ``L(x) = t``, and the
kernel-smoothed tail probability and expected excess used by the
finite-difference identities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .config import DEFAULT_TOLERANCES
from .exceptions import DegenerateWeightsError
from .scenarios import as_scenarios, check_weights

__all__ = [
    "KernelSpec",
    "ConditionalMoments",
    "kernel_pdf",
    "kernel_cdf",
    "kernel_partial_mean",
    "kde_density",
    "conditional_moments_at",
    "smoothed_tail_probability",
    "smoothed_expected_excess",
]

_SQRT_2PI = np.sqrt(2.0 * np.pi)
RULE_MANUAL = "manual"
RULE_SCALE = "scale_n_pow_minus_fifth"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel and bandwidth choice.

    With ``rule="scale_n_pow_minus_fifth"`` the bandwidth is
    ``std(values) * n**(-1/5)`` for whatever loss vector it is resolved
    against, so it follows the portfolio when the weights change. ``bandwidth``
    then acts as a multiplier on that rule. With ``rule="manual"`` the
    bandwidth is used as given.
    """

    bandwidth: float | None = None
    kernel: str = "gaussian"
    rule: str = RULE_SCALE

    def __post_init__(self):
        if self.kernel not in ("gaussian", "epanechnikov"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.rule not in (RULE_MANUAL, RULE_SCALE):
            raise ValueError(f"unknown bandwidth rule {self.rule!r}")
        if self.rule == RULE_MANUAL and self.bandwidth is None:
            raise ValueError("manual rule needs a bandwidth")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    @classmethod
    def manual(cls, bandwidth: float, kernel: str = "gaussian") -> "KernelSpec":
        return cls(bandwidth=bandwidth, kernel=kernel, rule=RULE_MANUAL)

    def resolve(self, values: np.ndarray, probs: np.ndarray | None = None) -> float:
        if self.rule == RULE_MANUAL:
            return float(self.bandwidth)
        n = values.shape[0]
        if probs is None:
            sd = float(np.std(values, ddof=1)) if n > 1 else 0.0
        else:
            m = float(probs @ values)
            sd = float(np.sqrt(probs @ (values - m) ** 2))
        h = sd * n ** (-0.2) * (1.0 if self.bandwidth is None else self.bandwidth)
        if not h > 0:
            raise DegenerateWeightsError("bandwidth rule gives zero: the portfolio loss is constant")
        return h

    def to_dict(self) -> dict:
        return {"bandwidth": self.bandwidth, "kernel": self.kernel, "rule": self.rule}


DEFAULT_KERNEL = KernelSpec()


def kernel_pdf(u: np.ndarray, kernel: str) -> np.ndarray:
    if kernel == "gaussian":
        return np.exp(-0.5 * u * u) / _SQRT_2PI
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def kernel_cdf(u: np.ndarray, kernel: str) -> np.ndarray:
    if kernel == "gaussian":
        return ndtr(u)
    v = np.clip(u, -1.0, 1.0)
    return 0.5 + 0.75 * v - 0.25 * v**3


def kernel_partial_mean(u: np.ndarray, kernel: str) -> np.ndarray:
    """``E[(u + U)^+]`` for ``U`` drawn from the kernel."""
    if kernel == "gaussian":
        return u * ndtr(u) + np.exp(-0.5 * u * u) / _SQRT_2PI
    v = np.clip(u, -1.0, 1.0)
    inner = v / 2.0 + 3.0 / 16.0 + 3.0 * v * v / 8.0 - v**4 / 16.0
    return np.where(u >= 1.0, u, inner)


def _weighted_mean(values, probs):
    return values.mean() if probs is None else float(probs @ values)


def kde_density(sample, t: float, k: KernelSpec = DEFAULT_KERNEL, probs=None, bandwidth: float | None = None) -> float:
    """Kernel density estimate of ``sample`` at ``t``."""
    v = np.asarray(sample, dtype=np.float64).reshape(-1)
    if v.shape[0] < 2:
        raise ValueError("kde needs at least two points")
    h = k.resolve(v, probs) if bandwidth is None else bandwidth
    return _weighted_mean(kernel_pdf((v - t) / h, k.kernel), probs) / h


def smoothed_tail_probability(values, t: float, k: KernelSpec = DEFAULT_KERNEL, probs=None,
                              bandwidth: float | None = None) -> float:
    """``P[V > t]`` for the kernel-smoothed law of ``values``."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    h = k.resolve(v, probs) if bandwidth is None else bandwidth
    return _weighted_mean(kernel_cdf((v - t) / h, k.kernel), probs)


def smoothed_expected_excess(values, t: float, k: KernelSpec = DEFAULT_KERNEL, probs=None,
                             bandwidth: float | None = None) -> float:
    """``E[(V - t)^+]`` for the kernel-smoothed law of ``values``."""
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    h = k.resolve(v, probs) if bandwidth is None else bandwidth
    return h * _weighted_mean(kernel_partial_mean((v - t) / h, k.kernel), probs)


@dataclass
class ConditionalMoments:
    """Kernel-weighted moments of the asset losses given ``L(x) = t``."""

    mean: np.ndarray
    cov: np.ndarray
    density: float
    t: float
    bandwidth: float
    weight_sum: float
    n_eff: float
    window_cov: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "density": self.density,
            "t": self.t,
            "bandwidth": self.bandwidth,
            "n_eff": self.n_eff,
        }


def conditional_moments_at(S, x, t: float, k: KernelSpec = DEFAULT_KERNEL, bandwidth: float | None = None) -> ConditionalMoments:
    """Nadaraya-Watson mean and covariance of the columns of ``S`` given ``L(x) = t``.

    The kernel window has width ``h`` in ``L(x)``, so the raw weighted
    covariance (``window_cov``) also contains the spread of ``L(x)`` inside
    the window, of order ``h^2``. On the event ``L(x) = t`` the true
    conditional covariance satisfies ``Cov x = 0``; ``cov`` therefore
    partials out the within-window variation of ``L(x)``::

        cov = C - (C x)(C x)' / (x' C x)

    which is PSD, annihilates ``x`` and is exactly zero for ``d = 1`` and for
    one-factor (comonotonic) samples.

    Raises
    ------
    DegenerateWeightsError
        The total kernel weight ``sum_k p_k K((L_k - t)/h)`` is below
        ``1e-12``: ``t`` is too far in the tail for the bandwidth.
    """
    S = as_scenarios(S)
    w = check_weights(x, S.d)
    L = S.losses @ w
    probs = None if S.is_uniform else S.probs
    h = k.resolve(L, probs) if bandwidth is None else float(bandwidth)
    kw = kernel_pdf((L - t) / h, k.kernel)
    kw = kw / S.n if probs is None else kw * probs
    total = float(kw.sum())
    if total < DEFAULT_TOLERANCES.kernel_weight_floor:
        raise DegenerateWeightsError(
            f"total kernel weight {total:.3g} at level {t!r} with bandwidth {h:.3g}"
        )
    idx = np.flatnonzero(kw)
    wk = kw[idx] / total
    X = S.losses[idx]
    mean = wk @ X
    Xc = X - mean
    raw = (Xc * wk[:, None]).T @ Xc
    raw = 0.5 * (raw + raw.T)
    cx = raw @ w
    var_l = float(w @ cx)
    if var_l > 0:
        cov = raw - np.outer(cx, cx) / var_l
        cov = 0.5 * (cov + cov.T)
    else:
        cov = raw.copy()
    n_eff = 1.0 / float(wk @ wk)
    return ConditionalMoments(mean, cov, total / h, float(t), h, total, n_eff, raw)
