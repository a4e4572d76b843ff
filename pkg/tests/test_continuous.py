import numpy as np
import pytest

from riskderiv import (
    EllipticalMeasure,
    EllipticalModel,
    EmptyTailError,
    ExpectedShortfall,
    HeavyTailModel,
    KernelSpec,
    MeanLoss,
    ScenarioMatrix,
    conditional_moments_at,
    convexity_check,
    elliptical_gradients,
    es_gradient_tail,
    es_hessian,
    es_tail_integral,
    expected_shortfall,
    fd_gradient,
    fd_hessian,
    generic_gradient_identity,
    homogeneity_identity,
    sample,
    tail_gradient_identity,
    value_at_risk,
    var_gradient_kernel,
)
from riskderiv.kernels import smoothed_tail_probability

ALPHA = 0.95


@pytest.fixture(scope="module")
def gauss():
    m = EllipticalModel(np.zeros(2), np.eye(2))
    return m, ScenarioMatrix(sample(m, 10**6, 0))


@pytest.fixture(scope="module")
def gauss3():
    sigma = np.array([[1.0, 0.3, 0.2], [0.3, 2.0, 0.5], [0.2, 0.5, 1.5]])
    m = EllipticalModel(np.zeros(3), sigma)
    return m, ScenarioMatrix(sample(m, 10**6, 7))


def test_benchmark_gradients(gauss):
    m, S = gauss
    x = np.array([1.0, 1.0])
    np.testing.assert_allclose(var_gradient_kernel(S, x, ALPHA), [1.16309, 1.16309], rtol=0.02)
    np.testing.assert_allclose(es_gradient_tail(S, x, ALPHA), [1.45855, 1.45855], rtol=0.02)


def test_es_tail_euler_exact(rng):
    for n in (50, 999, 20000):
        X = rng.standard_normal((n, 3))
        x = rng.uniform(-1, 2, 3)
        for a in (0.5, 0.9, 0.975):
            es = expected_shortfall(X, x, a)
            assert x @ es_gradient_tail(X, x, a) == pytest.approx(es, abs=1e-10 * (1 + abs(es)))


def test_es_tail_weighted_and_tied(rng):
    X = np.round(rng.standard_normal((300, 2)), 1)  # many ties in L(x)
    x = np.array([1.0, 1.0])
    for S in (ScenarioMatrix(X), ScenarioMatrix(X, rng.dirichlet(np.ones(300)))):
        es = expected_shortfall(S, x, 0.9)
        assert x @ es_gradient_tail(S, x, 0.9) == pytest.approx(es, abs=1e-10 * (1 + abs(es)))


def test_es_tail_empty():
    with pytest.raises(EmptyTailError):
        es_gradient_tail(np.ones((10, 2)), [1, 1], 0.9)


def test_var_gradient_kernel_comonotonic():
    m = HeavyTailModel("comonotonic_pareto", 3.0, [1.0, 1.0])
    S = ScenarioMatrix(sample(m, 10**5, 0))
    g = var_gradient_kernel(S, [1, 1], 0.9)
    q = value_at_risk(S, [1, 1], 0.9)
    assert g[0] == g[1]
    # the kernel average of L(x) over the window around q is pulled
    # toward the bulk of the density; the gap is the smoothing bias
    np.testing.assert_allclose(g, [q / 2, q / 2], rtol=0.02)


def test_kernel_gradients_match_fd(gauss):
    _, S = gauss
    x = np.array([1.0, 0.6])
    fd_var = fd_gradient(lambda z: value_at_risk(S, z, ALPHA), x, 0.02)
    fd_es = fd_gradient(lambda z: expected_shortfall(S, z, ALPHA), x, 0.02)
    np.testing.assert_allclose(var_gradient_kernel(S, x, ALPHA), fd_var, rtol=0.03)
    np.testing.assert_allclose(es_gradient_tail(S, x, ALPHA), fd_es, rtol=0.03)


def test_var_gradient_scale_invariance(gauss):
    m, S = gauss
    x = np.array([1.0, 0.4])
    a = var_gradient_kernel(S, x, ALPHA)
    b = var_gradient_kernel(S, 2 * x, ALPHA)
    # the closed-form target is exactly degree-0 homogeneous
    np.testing.assert_allclose(elliptical_gradients(m, 2 * x, ALPHA)[0], elliptical_gradients(m, x, ALPHA)[0],
                               rtol=1e-14)
    cm = conditional_moments_at(S, x, value_at_risk(S, x, ALPHA))
    se = np.sqrt(np.diag(cm.cov) / cm.n_eff)
    assert np.all(np.abs(a - b) <= 3 * se)


def test_bandwidth_robustness(gauss):
    _, S = gauss
    x = np.array([1.0, 1.0])
    base = var_gradient_kernel(S, x, ALPHA)
    for mult in (0.5, 2.0):
        g = var_gradient_kernel(S, x, ALPHA, KernelSpec(bandwidth=mult))
        np.testing.assert_allclose(g, base, rtol=0.03)
        h = es_hessian(S, x, ALPHA, KernelSpec(bandwidth=mult))
        assert np.all(np.isfinite(h))


def test_es_hessian_one_dimensional(rng):
    H = es_hessian(rng.standard_normal((5000, 1)), [1.0], 0.9)
    assert H.shape == (1, 1) and H[0, 0] == 0.0


def test_es_hessian_comonotonic():
    m = HeavyTailModel("comonotonic_pareto", 3.0, [1.0, 1.0])
    S = ScenarioMatrix(sample(m, 10**5, 0))
    H = es_hessian(S, [1, 1], 0.9, KernelSpec.manual(1e-3))
    trace_scale = es_gradient_tail(S, [1, 1], 0.9).sum()
    assert np.abs(H).max() < 1e-4 * trace_scale


def test_es_hessian_three_assets(gauss3):
    m, S = gauss3
    x = np.array([1.0, 0.5, 1.2])
    H = es_hessian(S, x, ALPHA)
    ref = fd_hessian(lambda z: EllipticalMeasure(m, ALPHA).evaluate(None, z), x, 1e-3)
    np.testing.assert_array_equal(H, H.T)
    ev = np.linalg.eigvalsh(H)
    assert ev[0] >= -1e-8 * np.trace(H)
    dominant = np.abs(ref) > 0.1 * np.trace(ref)
    assert np.all(np.abs(H - ref)[dominant] <= 0.10 * np.abs(ref)[dominant])


def test_generic_identity_es(gauss):
    m, S = gauss
    r = generic_gradient_identity(S, [1, 1], EllipticalMeasure(m, ALPHA), t=0.0)
    assert r.relative <= 0.05


def test_generic_identity_mean(gauss):
    _, S = gauss
    r = generic_gradient_identity(S, [1.0, 0.5], MeanLoss(), t=0.0)
    assert r.relative <= 0.05 or np.linalg.norm(r.residual) <= 0.05 * np.linalg.norm(r.terms["conditional_mean"])


def test_generic_identity_var_correction_vanishes(gauss):
    m, S = gauss
    x = np.array([1.0, 1.0])
    r = generic_gradient_identity(S, x, EllipticalMeasure(m, ALPHA, "var"), t=0.0)
    correction = r.terms["tail_prob_gradient"] / r.terms["density"]
    assert np.linalg.norm(correction) <= 0.05 * np.linalg.norm(r.gradient)
    discrepancy = r.gradient - r.terms["conditional_mean"]
    np.testing.assert_allclose(r.residual, discrepancy + correction, atol=1e-12)


def test_generic_identity_warns_on_tiny_density(rng):
    X = rng.standard_normal((2000, 2))
    with pytest.warns(RuntimeWarning, match="density"):
        generic_gradient_identity(X, [1, 1], ExpectedShortfall(0.95), t=4.0)


def test_es_tail_integral(gauss):
    m, S = gauss
    r = es_tail_integral(S, [1, 1], ALPHA, EllipticalMeasure(m, ALPHA))
    assert np.linalg.norm(r.terms["integral_term"]) <= 0.05 * np.linalg.norm(r.gradient)


def test_tail_identity_var(gauss):
    m, S = gauss
    r = tail_gradient_identity(S, [1, 1], EllipticalMeasure(m, ALPHA, "var"), 0.0)
    assert r.relative <= 0.05


def test_tail_identity_symmetric_for_exchangeable():
    m = HeavyTailModel("comonotonic_pareto", 3.0, [1.0, 1.0])
    S = ScenarioMatrix(sample(m, 10**5, 0))
    r = tail_gradient_identity(S, [1, 1], ExpectedShortfall(0.9), 0.0)
    assert r.residual[0] == pytest.approx(r.residual[1], abs=1e-9)


def test_homogeneity_at_zero(gauss):
    m, S = gauss
    r = homogeneity_identity(S, [1, 1], EllipticalMeasure(m, ALPHA), t=0.0)
    assert r.rhs == 0.0
    assert abs(r.lhs) <= 2 * r.stderr


def test_homogeneity_at_one():
    m = EllipticalModel(np.zeros(1), np.eye(1))
    S = ScenarioMatrix(sample(m, 10**6, 3))
    r = homogeneity_identity(S, [1.0], EllipticalMeasure(m, ALPHA), t=1.0)
    assert r.lhs == pytest.approx(r.rhs, rel=0.10)


def test_tail_probability_at_zero_is_scale_free(gauss):
    m, S = gauss
    x = np.array([1.0, 0.3])
    meas = EllipticalMeasure(m, ALPHA)
    vals = []
    for lam in (0.5, 1.0, 3.0):
        H = S.losses @ (lam * x) - meas.evaluate(S, lam * x)
        vals.append(smoothed_tail_probability(H, 0.0, KernelSpec(), bandwidth=KernelSpec().resolve(H)))
    np.testing.assert_allclose(vals, vals[1], rtol=1e-10)


def test_convexity_es(gauss3):
    m, S = gauss3
    rep = convexity_check(S, [1.0, 0.5, 1.2], EllipticalMeasure(m, ALPHA))
    assert rep.psd and rep.cov_psd
    rep2 = convexity_check(S, [1.0, 0.5, 1.2], ExpectedShortfall(ALPHA))
    assert rep2.psd


def test_convexity_scalar(rng):
    X = rng.standard_normal((20000, 1))
    rep = convexity_check(X, [1.0], ExpectedShortfall(0.9))
    assert rep.matrix.shape == (1, 1)
    assert rep.matrix[0, 0] >= -rep.tolerance
