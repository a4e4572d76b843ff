import numpy as np
import pytest

from riskderiv import (
    ExpectedShortfall,
    FunctionMeasure,
    MeanLoss,
    ScaledMeasure,
    ScenarioMatrix,
    ValueAtRisk,
    coherence_probe,
    expected_shortfall,
    value_at_risk,
)
from riskderiv.measures import lower_quantile

from conftest import random_instance


def test_var_es_one_to_hundred():
    S = ScenarioMatrix(np.arange(1.0, 101.0))
    assert value_at_risk(S, [1.0], 0.95) == 95.0
    assert expected_shortfall(S, [1.0], 0.95) == pytest.approx(98.0, abs=1e-12)


def test_four_point_example(four):
    assert value_at_risk(four, [1, 1], 0.7) == 6.0
    assert expected_shortfall(four, [1, 1], 0.7) == pytest.approx(7.666666666666667, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.01, 0.5, 0.99])
def test_constant_loss(alpha):
    S = ScenarioMatrix(np.full((7, 1), 3.25))
    assert value_at_risk(S, [1], alpha) == 3.25
    assert expected_shortfall(S, [1], alpha) == pytest.approx(3.25, abs=1e-14)


def test_lower_quantile_convention():
    # F jumps to 0.5 at 2: the 0.5-quantile is 2, anything above moves to 3
    v = np.array([1.0, 2.0, 3.0, 4.0])
    assert lower_quantile(v, None, 0.5) == 2.0
    assert lower_quantile(v, None, 0.5000001) == 3.0
    assert lower_quantile(v, np.array([0.1, 0.4, 0.25, 0.25]), 0.5) == 2.0


def test_weighted_and_uniform_paths_agree(rng):
    for _ in range(200):
        S, x, a = random_instance(rng, weighted=False)
        W = ScenarioMatrix(S.losses, np.full(S.n, 1.0 / S.n) * (1 + 1e-13))
        assert value_at_risk(S, x, a) == value_at_risk(W, x, a)
        assert expected_shortfall(S, x, a) == pytest.approx(expected_shortfall(W, x, a), rel=1e-12, abs=1e-12)


def _brute_force_es(L, p, alpha):
    """Tail average with the atom at the quantile split proportionally."""
    order = np.argsort(L, kind="stable")
    Ls, ps = L[order], p[order]
    # integrate the quantile function over (alpha, 1)
    cdf_lo = np.concatenate([[0.0], np.cumsum(ps)[:-1]])
    cdf_hi = np.cumsum(ps)
    mass = np.clip(cdf_hi - np.maximum(cdf_lo, alpha), 0.0, None)
    mass[-1] += max(0.0, 1.0 - cdf_hi[-1])
    return float(mass @ Ls / (1.0 - alpha))


def test_es_equals_brute_force_small_instances(rng):
    # exhaustive over supports n <= 8 with random weights and levels
    for n in range(1, 9):
        for _ in range(60):
            L = rng.integers(-3, 4, n).astype(float)  # integer grid forces ties
            p = rng.dirichlet(np.ones(n))
            for alpha in (0.1, 0.5, 0.77, 0.95):
                S = ScenarioMatrix(L, p)
                assert expected_shortfall(S, [1.0], alpha) == pytest.approx(
                    _brute_force_es(L, S.probs, alpha), rel=1e-10, abs=1e-10)


def test_es_at_least_var(rng):
    for _ in range(300):
        S, x, a = random_instance(rng)
        assert expected_shortfall(S, x, a) >= value_at_risk(S, x, a) - 1e-12


def test_exact_homogeneity_and_translation(rng):
    for _ in range(100):
        S, x, a = random_instance(rng)
        lam = 4.0  # a power of two keeps the scaled losses exact
        assert value_at_risk(S, lam * x, a) == lam * value_at_risk(S, x, a)
        assert expected_shortfall(S, lam * x, a) == pytest.approx(lam * expected_shortfall(S, x, a), rel=1e-13)
        c = 2.5
        C = S.with_column(1.0)
        xc = np.append(x, c)
        assert value_at_risk(C, xc, a) == pytest.approx(value_at_risk(S, x, a) + c, rel=1e-13, abs=1e-13)
        assert expected_shortfall(C, xc, a) == pytest.approx(expected_shortfall(S, x, a) + c, rel=1e-13, abs=1e-13)


def test_coherence_es(rng):
    S = ScenarioMatrix(rng.standard_t(3, (400, 3)))
    rep = coherence_probe(S, ExpectedShortfall(0.9), trials=50, seed=1)
    assert rep.coherent, rep.to_dict()


def test_var_subadditivity_counterexample():
    # each asset alone stays below its 0.9 quantile threshold, together they do not
    n = 100
    L = np.zeros((n, 2))
    L[:6, 0] = 100.0
    L[6:12, 1] = 100.0
    S = ScenarioMatrix(L)
    rep = coherence_probe(S, ValueAtRisk(0.9), trials=10, seed=0)
    sub = rep.axioms["subadditivity"]
    assert not sub.passed
    assert sub.counterexamples
    ce = sub.counterexamples[0]
    assert ce["rho_sum"] > ce["rho_x"] + ce["rho_y"]
    assert rep.axioms["homogeneity"].passed and rep.axioms["translation"].passed
    assert rep.axioms["monotonicity"].passed


def test_scaled_es(rng):
    S = ScenarioMatrix(rng.standard_normal((200, 2)))
    rep = coherence_probe(S, ScaledMeasure(ExpectedShortfall(0.95), 2.5), trials=30, seed=3)
    assert rep.axioms["homogeneity"].passed
    assert rep.axioms["subadditivity"].passed and rep.axioms["monotonicity"].passed
    # a cash shift c moves 2.5 * ES by 2.5 c
    assert not rep.axioms["translation"].passed


def test_probe_rejects_zero_trials(four):
    with pytest.raises(ValueError):
        coherence_probe(four, MeanLoss(), trials=0)


def test_function_measure(four):
    m = FunctionMeasure(lambda S, x: float(np.max(S.losses @ x)), name="max")
    assert m(four, [1, 1]) == 8.0
    assert not m.has_gradient
    with pytest.raises(NotImplementedError):
        m.gradient(four, [1, 1])


def test_mean_loss_gradient(four):
    np.testing.assert_allclose(MeanLoss().gradient(four, [1, 1]), [2.75, 2.5])
