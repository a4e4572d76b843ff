"""Numerical tolerances shared by every module.

All defaults live in one frozen record so a run can be reproduced from the
values echoed into CLI reports.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class Tolerances:
    # probabilities read from files may be off by at most this much before
    # renormalisation; after it they sum to 1 within ``prob_sum_exact``
    prob_sum_load: float = 1e-9
    prob_sum_exact: float = 1e-12
    # slack when comparing a cumulative probability against alpha
    cdf: float = 1e-12
    # atom membership |L_k(x) - q| <= atom_rel * (1 + |q|)
    atom_rel: float = 1e-9
    # kernel weights below this total mean the level is out of reach
    kernel_weight_floor: float = 1e-12
    density_warn: float = 1e-6
    # eigenvalue floors, relative to the trace
    psd_cov: float = 1e-8
    psd_convexity: float = 1e-6
    # relative tolerance used by the coherence probe
    coherence_rel: float = 1e-9

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT_TOLERANCES = Tolerances()
