import math
import warnings

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from tprs_emu.errors import InputError
from tprs_emu.linalg import correlation_matrix
from tprs_emu.mcmc import (
    ChainState,
    CoefficientPosterior,
    PosteriorSamples,
    PriorConfig,
    hyper_log_prior,
    initial_state,
    itprs_log_posterior,
    metropolis_chain,
    prior_log_density,
)


# priors -------------------------------------------------------------------


def test_beta_uniform():
    assert prior_log_density("beta", 0.5, 1, 1) == 0.0


def test_gamma_exponential():
    assert prior_log_density("gamma", 1.0, 1, 1) == pytest.approx(-1.0, abs=1e-15)
    assert prior_log_density("gamma", 0.0, 1, 1) == -math.inf
    assert prior_log_density("beta", 1.0, 2, 2) == -math.inf


def test_gamma_mode():
    f = lambda v: prior_log_density("gamma", v, 5.0, 0.2)
    assert f(0.8) > f(0.8 - 1e-4) and f(0.8) > f(0.8 + 1e-4)


def test_prior_config_validation():
    with pytest.raises(ValueError):
        PriorConfig(a_tau=0.0)
    with pytest.raises(InputError):
        prior_log_density("lognormal", 1.0, 1, 1)


# log posterior ------------------------------------------------------------


def _toy(n=6, p=3, d=2, seed=0, orthogonal=False):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, d))
    if orthogonal:
        gram = np.diag(rng.uniform(0.5, 2.0, size=p))
    else:
        A = rng.normal(size=(20, p))
        gram = A.T @ A
    beta = rng.normal(size=(n, p))
    return X, gram, beta


def test_p1_n2_hand_oracle():
    X = np.array([[0.2, 0.4], [0.7, 0.1]])
    priors = PriorConfig()
    state = ChainState(3.0, [1.7], [[0.4, 0.6]])
    bhat = np.array([0.5, -0.3])
    R = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            R[i, j] = 0.4 ** (4 * (X[i, 0] - X[j, 0]) ** 2) * 0.6 ** (4 * (X[i, 1] - X[j, 1]) ** 2)
    R += priors.nugget * np.eye(2)
    D = np.eye(2) / 3.0 + 1.7 * R
    expected = multivariate_normal(np.zeros(2), D).logpdf(bhat) + hyper_log_prior(state, priors, 0.2, 4.0)
    got = itprs_log_posterior(state, bhat, np.eye(2), priors, inputs=X, sse=0.2, resid_dof=4.0)
    assert got == pytest.approx(expected, abs=1e-8)
    post = CoefficientPosterior(X, [[1.0]], bhat[:, None], priors, sse=0.2, resid_dof=4.0)
    assert post(state) == pytest.approx(expected, abs=1e-8)


def test_log_posterior_deterministic():
    X, gram, beta = _toy()
    post = CoefficientPosterior(X, gram, beta, PriorConfig())
    s = initial_state(beta, PriorConfig(), 1.0, 10.0, 2)
    assert abs(post(s) - post(s)) < 1e-12


def test_dense_and_kron_paths_agree():
    X, gram, beta = _toy()
    priors = PriorConfig()
    s = initial_state(beta, priors, 1.0, 10.0, 2)
    post = CoefficientPosterior(X, gram, beta, priors, sse=1.0, resid_dof=10.0)
    dense = itprs_log_posterior(s, beta.T.ravel(), post.A_gram, priors, inputs=X, sse=1.0, resid_dof=10.0)
    assert post(s) == pytest.approx(dense, abs=1e-8)


def test_scaling_beta_lowers_gaussian_term():
    X, gram, beta = _toy()
    priors = PriorConfig()
    s = initial_state(beta, priors, 1.0, 10.0, 2)
    a = CoefficientPosterior(X, gram, beta, priors)(s)
    b = CoefficientPosterior(X, gram, 10 * beta, priors)(s)
    assert b < a


def test_non_pd_state_gives_minus_inf():
    X = np.array([[0.3, 0.3], [0.3, 0.3]])
    priors = PriorConfig(nugget=0.0)
    s = ChainState(1e300, [1.0], [[0.5, 0.5]], nugget=0.0)
    post = CoefficientPosterior(X, [[1.0]], np.array([[1.0], [2.0]]), priors)
    assert post(s) == -math.inf


def test_out_of_support_gives_minus_inf():
    X, gram, beta = _toy()
    post = CoefficientPosterior(X, gram, beta, PriorConfig())
    s = initial_state(beta, PriorConfig(), 1.0, 10.0, 2)
    s.tau[0] = -1.0
    assert post(s) == -math.inf


# sampler ------------------------------------------------------------------


def test_flat_target_accepts_everything():
    init = ChainState(1.0, [1.0, 2.0], [[0.5], [0.5]])
    samples = metropolis_chain(lambda s: 0.0, init, n_iter=300, burn_in=50, seed=1, jacobian=False)
    assert all(r == 1.0 for r in samples.acceptance_rates.values())
    assert samples.n_draws == 250


def test_one_dimensional_gaussian_target():
    # target N(0.5, 1) on log tau, expressed in the working coordinate
    init = ChainState(1.0, [1.0], [[0.5]])
    log_post = lambda s: -0.5 * (math.log(s.tau[0]) - 0.5) ** 2
    samples = metropolis_chain(log_post, init, n_iter=51000, burn_in=1000, seed=7, blocks=("tau",),
                               jacobian=False)
    u = np.log(samples.retained()["tau"][:, 0])
    assert abs(u.mean() - 0.5) < 0.05
    assert abs(u.std() - 1.0) < 0.05


def test_jacobian_targets_natural_density():
    # Gamma(3, 1) on tau: mean 3
    init = ChainState(1.0, [1.0], [[0.5]])
    log_post = lambda s: prior_log_density("gamma", s.tau[0], 3.0, 1.0)
    samples = metropolis_chain(log_post, init, n_iter=41000, burn_in=1000, seed=3, blocks=("tau",))
    assert abs(samples.retained()["tau"].mean() - 3.0) < 0.15


def test_chain_deterministic():
    X, gram, beta = _toy()
    priors = PriorConfig()
    init = initial_state(beta, priors, 1.0, 10.0, 2)
    runs = [metropolis_chain(CoefficientPosterior(X, gram, beta, priors), init, n_iter=60, burn_in=10, seed=5)
            for _ in range(2)]
    np.testing.assert_array_equal(runs[0].tau, runs[1].tau)
    np.testing.assert_array_equal(runs[0].accepted, runs[1].accepted)


def test_woodbury_matches_dense_chain():
    X, gram, beta = _toy(n=8, p=3, d=2, seed=2)
    priors = PriorConfig()
    init = initial_state(beta, priors, 2.0, 20.0, 2)
    fast = CoefficientPosterior(X, gram, beta, priors, sse=2.0, resid_dof=20.0, woodbury=True)
    slow = CoefficientPosterior(X, gram, beta, priors, sse=2.0, resid_dof=20.0, woodbury=False)
    a = metropolis_chain(fast, init, n_iter=500, burn_in=100, seed=11)
    b = metropolis_chain(slow, init, n_iter=500, burn_in=100, seed=11)
    np.testing.assert_array_equal(a.accepted, b.accepted)
    np.testing.assert_allclose(a.theta, b.theta, rtol=1e-12)


def test_cached_inverse_matches_fresh_at_refresh():
    X, gram, beta = _toy(n=8, p=3, d=2, seed=4)
    priors = PriorConfig()
    post = CoefficientPosterior(X, gram, beta, priors, refresh_every=10)
    metropolis_chain(post, initial_state(beta, priors, 1.0, 10.0, 2), n_iter=300, burn_in=50, seed=2)
    assert len(post.refresh_errors) > 5
    assert max(post.refresh_errors) < 1e-8
    fresh = post._factor(post.state)["Dinv"]
    assert np.max(np.abs(fresh - post.cached_inverse)) < 1e-6


def _batch_se(x, batches=20):
    m = x[: x.size // batches * batches].reshape(batches, -1).mean(axis=1)
    return m.std(ddof=1) / math.sqrt(batches)


def test_pc_factorization_joint_vs_marginal():
    X, gram, beta = _toy(n=8, p=2, d=1, seed=6, orthogonal=True)
    priors = PriorConfig()
    init = ChainState(4.0, [1.0, 1.0], [[0.5], [0.5]])
    n_iter, burn = 12000, 2000
    joint = metropolis_chain(CoefficientPosterior(X, gram, beta, priors), init, n_iter=n_iter, burn_in=burn,
                             seed=1, blocks=("tau", "theta"))
    for k in range(2):
        single = CoefficientPosterior(X, gram[k:k + 1, k:k + 1], beta[:, k:k + 1], priors)
        init_k = ChainState(4.0, [1.0], [[0.5]])
        marg = metropolis_chain(single, init_k, n_iter=n_iter, burn_in=burn, seed=100 + k, blocks=("tau", "theta"))
        for a, b in ((joint.retained()["tau"][:, k], marg.retained()["tau"][:, 0]),
                     (joint.retained()["theta"][:, k, 0], marg.retained()["theta"][:, 0, 0])):
            se = math.hypot(_batch_se(a), _batch_se(b))
            assert abs(a.mean() - b.mean()) < 3 * se


def test_chain_argument_errors():
    init = ChainState(1.0, [1.0], [[0.5]])
    with pytest.raises(InputError):
        metropolis_chain(lambda s: 0.0, init, n_iter=10, burn_in=10)
    with pytest.raises(InputError):
        metropolis_chain(lambda s: 0.0, init, n_iter=10, burn_in=0, proposal_scales=0.0)
    with pytest.raises(InputError):
        metropolis_chain(lambda s: -math.inf, init, n_iter=10, burn_in=0)


def test_stuck_chain_warns():
    init = ChainState(1.0, [1.0], [[0.5]])
    target = lambda s: 0.0 if s.tau[0] == 1.0 else -math.inf
    with pytest.warns(RuntimeWarning, match="no proposals accepted"):
        metropolis_chain(target, init, n_iter=1000, burn_in=0, blocks=("tau",), adapt=False)


def test_trace_csv_and_dict_round_trip(tmp_path):
    init = ChainState(1.0, [1.0, 2.0], [[0.5, 0.4], [0.3, 0.6]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = metropolis_chain(lambda st: 0.0, init, n_iter=5, burn_in=1, seed=0, jacobian=False)
    s.to_trace_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iter,block,value,accepted"
    # per iteration: sigma2_inv + 2 tau + 4 theta components
    assert len(lines) == 1 + 5 * 7
    back = PosteriorSamples.from_dict(s.to_dict())
    np.testing.assert_array_equal(back.theta, s.theta)
    np.testing.assert_array_equal(back.accepted, s.accepted)
    assert back.state(0).tau.tolist() == s.state(0).tau.tolist()
