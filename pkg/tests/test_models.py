import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from oracles import wishart_logpdf_scipy
from sanova.design import build_design, make_contrasts
from sanova.models import (
    ChainState,
    GammaPrior,
    McarSpec,
    ModelError,
    Observations,
    SanovaSpec,
    gamma_logpdf,
    log_likelihood,
    log_prior,
    wishart_logpdf,
    wishart_preset,
)
from sanova.spatial import build_graph, car_structure


@pytest.fixture(scope="module")
def spec20(mn20):
    _, _, car = mn20
    return SanovaSpec("normal", build_design(car, make_contrasts("HA1")))


def test_normal_loglik_zero_residuals(spec20):
    state = ChainState({"theta": np.zeros(60), "tau": np.ones(3), "eta0": 1.0})
    ll = log_likelihood(spec20, state, Observations(np.zeros((20, 3))))
    assert ll == pytest.approx(-30 * np.log(2 * np.pi), rel=1e-14)


def _single_cell_spec(likelihood="poisson"):
    from sanova.design import ContrastMatrix

    car = car_structure(build_graph(1, []))
    return SanovaSpec(likelihood, build_design(car, ContrastMatrix(np.ones((1, 1)), "single")))


def test_poisson_loglik_closed_forms():
    spec = _single_cell_spec()
    st0 = ChainState({"theta": np.zeros(1), "tau": np.ones(1)})
    assert log_likelihood(spec, st0, Observations([[0.0]], [[1.0]])) == pytest.approx(-1.0)
    ll = log_likelihood(spec, st0, Observations([[3.0]], [[2.0]]))
    assert ll == pytest.approx(3 * np.log(2) - 2 - np.log(6), rel=1e-14)


def test_poisson_rejects_bad_inputs():
    with pytest.raises(ModelError):
        Observations([[1.0]], [[0.0]])
    spec = _single_cell_spec()
    st0 = ChainState({"theta": np.zeros(1), "tau": np.ones(1)})
    with pytest.raises(ModelError, match="non-negative"):
        log_likelihood(spec, st0, Observations([[-1.0]], [[1.0]]))
    with pytest.raises(ModelError, match="requires expected"):
        log_likelihood(spec, st0, Observations([[1.0]]))


def test_dimension_mismatch(spec20):
    state = ChainState({"theta": np.zeros(60), "tau": np.ones(3), "eta0": 1.0})
    with pytest.raises(ModelError, match="shape"):
        log_likelihood(spec20, state, Observations(np.zeros((20, 2))))


def test_gamma_closed_form():
    assert gamma_logpdf(1.0, 0.1, 0.1) == pytest.approx(0.1 * np.log(0.1) - gammaln(0.1) - 0.1)
    assert GammaPrior().logpdf(1.0) == pytest.approx(0.1 * np.log(0.1) - gammaln(0.1) - 0.1)


def test_gamma_prior_mean_one_variance_ten():
    p = GammaPrior()
    assert p.shape / p.rate == pytest.approx(1.0)
    assert p.shape / p.rate**2 == pytest.approx(10.0)


def test_wishart_matches_scipy():
    R, nu = np.eye(3), 3.0
    assert wishart_logpdf(np.eye(3), R, nu) == pytest.approx(wishart_logpdf_scipy(np.eye(3), R, nu))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 4), st.floats(0.0, 5.0))
def test_wishart_matches_scipy_random(seed, n, extra_df):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    R = A @ A.T + n * np.eye(n)
    B = rng.standard_normal((n, n))
    Omega = B @ B.T + 0.5 * np.eye(n)
    nu = n + extra_df
    assert wishart_logpdf(Omega, R, nu) == pytest.approx(wishart_logpdf_scipy(Omega, R, nu), rel=1e-9, abs=1e-9)


def test_wishart_presets():
    np.testing.assert_array_equal(wishart_preset("0.002", 3), 0.002 * np.eye(3))
    np.testing.assert_array_equal(wishart_preset("MCAR-200", 3), 200 * np.eye(3))
    np.testing.assert_array_equal(wishart_preset(1, 2), np.eye(2))
    with pytest.raises(ModelError):
        wishart_preset("big", 3)


def test_mcar_spec_validation(mn20):
    _, _, car = mn20
    spec = McarSpec("poisson", car, 3)
    assert spec.wishart_df == 3.0
    np.testing.assert_array_equal(spec.wishart_R, np.eye(3))
    with pytest.raises(ModelError, match="positive definite"):
        McarSpec("normal", car, 2, wishart_R=np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ModelError, match="symmetric"):
        McarSpec("normal", car, 2, wishart_R=np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ModelError, match="at least"):
        McarSpec("normal", car, 3, wishart_df=2)


def test_sanova_spec_defaults(mn20):
    _, _, car = mn20
    d = build_design(car, make_contrasts("HA1"))
    assert SanovaSpec("normal", d).fixed_effect_prior == "flat"
    assert SanovaSpec("poisson", d).fixed_effect_prior == "normal"
    assert SanovaSpec("poisson", d).fixed_precision == pytest.approx(1e-6)
    assert SanovaSpec("normal", d).n_tau == 3
    with pytest.raises(ModelError):
        SanovaSpec("binomial", d)
    with pytest.raises(ModelError, match="tau priors"):
        SanovaSpec("normal", d, tau_prior=(GammaPrior(),) * 2)


def test_log_prior_zero_region_effects(spec20):
    # quadratic term vanishes; what remains is the Gamma and normalizer terms
    tau = np.array([2.0, 3.0, 0.5])
    state = ChainState({"theta": np.zeros(60), "tau": tau, "eta0": 1.0})
    expected = (
        np.sum(gamma_logpdf(tau, 0.1, 0.1)) + 0.5 * 19 * np.sum(np.log(tau)) + gamma_logpdf(1.0, 0.1, 0.1)
    )
    assert log_prior(spec20, state) == pytest.approx(float(expected))


def test_log_prior_flat_grand_mean_invariance(spec20, rng):
    theta = rng.standard_normal(60)
    s1 = ChainState({"theta": theta, "tau": np.ones(3), "eta0": 2.0})
    theta2 = theta.copy()
    theta2[0] += 123.0
    s2 = ChainState({"theta": theta2, "tau": np.ones(3), "eta0": 2.0})
    assert log_prior(spec20, s1) == log_prior(spec20, s2)


def test_log_prior_positivity_errors(spec20):
    with pytest.raises(ModelError, match="tau"):
        log_prior(spec20, ChainState({"theta": np.zeros(60), "tau": np.array([1.0, -1.0, 1.0]), "eta0": 1.0}))
    with pytest.raises(ModelError, match="eta0"):
        log_prior(spec20, ChainState({"theta": np.zeros(60), "tau": np.ones(3), "eta0": 0.0}))


def test_mcar_prior_uses_n_minus_g():
    # one island versus two islands, identical quadratic form (S = 0)
    one = car_structure(build_graph(4, [(0, 1), (1, 2), (2, 3)]))
    two = car_structure(build_graph(4, [(0, 1), (2, 3)]))
    Omega = np.diag([2.0, 5.0])
    states = ChainState({"S": np.zeros((4, 2)), "Omega": Omega, "beta": np.zeros(2)})
    a = log_prior(McarSpec("poisson", one, 2), states)
    b = log_prior(McarSpec("poisson", two, 2), states)
    assert a - b == pytest.approx(0.5 * np.log(np.linalg.det(Omega)))


def test_mcar_prior_rejects_indefinite(mn20):
    _, _, car = mn20
    with pytest.raises(ModelError, match="positive definite"):
        log_prior(McarSpec("poisson", car, 2), ChainState({"S": np.zeros((20, 2)), "Omega": -np.eye(2)}))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_posterior_kernel_finite(seed):
    rng = np.random.default_rng(seed)
    car = car_structure(build_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)]))
    spec = SanovaSpec("poisson", build_design(car, make_contrasts("helmert(2)")))
    state = ChainState({"theta": rng.normal(0, 2, 8), "tau": np.exp(rng.normal(0, 2, 2))})
    data = Observations(rng.poisson(5, (4, 2)), rng.uniform(0.5, 10, (4, 2)))
    assert np.isfinite(log_prior(spec, state) + log_likelihood(spec, state, data))
