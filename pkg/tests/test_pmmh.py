"""Metropolis machinery: flattening, proposals, priors, chain behaviour."""

import math

import numpy as np
import pytest
from scipy import stats

from pompkit import (BrownianParams, FlatPrior, IndependentPrior,
                     InitialStateParams, MetropState,
                     OrnsteinUhlenbeckParams, PmmhConfig, RandomWalkProposal,
                     acceptance_rate, batch_means_se, compose, flatten_params,
                     param_names, pmmh_chain, pmmh_step, posterior_mean,
                     propose_random_walk, seasonal_model, simulate_at_times,
                     unflatten_params, poisson_model)
from pompkit.errors import AllWeightsZeroError, ParamError
from pompkit.pmmh import VERY_SMALL_LL

# =============================================================================
# Helpers
# =============================================================================


def toy_model():
    return poisson_model(sde=BrownianParams(mu=[0.02], sigma=[0.2]),
                         init=InitialStateParams(mean=[0.5], sd=[0.3]))


def toy_chain_pieces(ll_value=-1.0):
    calls = []

    def loglik(params):
        calls.append(1)
        return ll_value

    proposal = RandomWalkProposal({"leaf0.mu0": 0.1})
    return loglik, proposal, calls


# =============================================================================
# Flattening
# =============================================================================


def test_canonical_names_and_round_trip():
    m = compose(toy_model(),
                seasonal_model(period=24.0, harmonics=1, scale=0.4,
                               sde=BrownianParams(mu=[0.0, 0.0],
                                                  sigma=[0.1, 0.1]),
                               init=InitialStateParams(mean=[1.0, -0.5],
                                                       sd=[0.1, 0.1])))
    values, names, positive = flatten_params(m.params)
    assert names == ["leaf0.mean0", "leaf0.sd0", "leaf0.mu0", "leaf0.sigma0",
                     "leaf1.mean0", "leaf1.mean1", "leaf1.sd0", "leaf1.sd1",
                     "leaf1.scale",
                     "leaf1.mu0", "leaf1.mu1", "leaf1.sigma0", "leaf1.sigma1"]
    rebuilt = unflatten_params(m.params, values)
    values2, names2, positive2 = flatten_params(rebuilt)
    assert np.array_equal(values, values2)
    assert names == names2
    assert np.array_equal(positive, positive2)
    # sd, sigma and scale are the positive-constrained coordinates here.
    by_name = dict(zip(names, positive))
    assert by_name["leaf0.sd0"] and by_name["leaf0.sigma0"]
    assert by_name["leaf1.scale"]
    assert not by_name["leaf0.mean0"] and not by_name["leaf1.mu1"]


def test_ou_field_order():
    from pompkit import gaussian_model

    m = gaussian_model(
        sde=OrnsteinUhlenbeckParams(alpha=[1.0], theta=[0.3], sigma=[0.2]),
        init=InitialStateParams(mean=[0.0], sd=[1.0]), scale=0.5)
    names = param_names(m.params)
    assert names == ["leaf0.mean0", "leaf0.sd0", "leaf0.scale",
                     "leaf0.alpha0", "leaf0.theta0", "leaf0.sigma0"]


def test_unflatten_rejects_wrong_length():
    m = toy_model()
    with pytest.raises(ParamError):
        unflatten_params(m.params, np.zeros(3))


# =============================================================================
# Proposals
# =============================================================================


def test_zero_step_is_exact_copy():
    m = toy_model()
    rng = np.random.default_rng(0)
    proposed = propose_random_walk(m.params, {"leaf0.mu0": 0.0}, rng)
    assert np.array_equal(flatten_params(proposed)[0],
                          flatten_params(m.params)[0])


def test_unnamed_coordinates_stay_fixed():
    m = toy_model()
    rng = np.random.default_rng(1)
    proposed = propose_random_walk(m.params, {"leaf0.mu0": 0.5}, rng)
    v0, names, _ = flatten_params(m.params)
    v1 = flatten_params(proposed)[0]
    moved = {n for n, a, b in zip(names, v0, v1) if a != b}
    assert moved == {"leaf0.mu0"}


def test_positive_coordinates_stay_positive():
    m = toy_model()
    rng = np.random.default_rng(2)
    params = m.params
    steps = {"leaf0.sigma0": 1.5, "leaf0.sd0": 1.5, "leaf0.mu0": 1.0}
    for _ in range(2000):
        params = propose_random_walk(params, steps, rng)
        assert float(params.sde.sigma[0]) > 0
        assert float(params.init.sd[0]) > 0


def test_unknown_step_name_rejected():
    m = toy_model()
    with pytest.raises(ParamError):
        propose_random_walk(m.params, {"nope": 0.1}, np.random.default_rng(0))


def test_random_stream_independent_of_free_set():
    # Fixing a coordinate must not shift the draws used by the others.
    m = toy_model()
    a = propose_random_walk(m.params, {"leaf0.mu0": 0.5, "leaf0.sigma0": 0.0},
                            np.random.default_rng(3))
    b = propose_random_walk(m.params, {"leaf0.mu0": 0.5, "leaf0.sigma0": 0.2},
                            np.random.default_rng(3))
    assert float(a.sde.mu[0]) == float(b.sde.mu[0])


def test_exact_jacobian_correction():
    m = toy_model()
    prop = RandomWalkProposal({"leaf0.sigma0": 0.3}, exact_jacobian=True)
    proposed, corr = prop(m.params, np.random.default_rng(4))
    want = math.log(float(proposed.sde.sigma[0]) / float(m.params.sde.sigma[0]))
    assert corr == pytest.approx(want, rel=1e-12)
    symmetric = RandomWalkProposal({"leaf0.sigma0": 0.3})
    _, corr0 = symmetric(m.params, np.random.default_rng(4))
    assert corr0 == 0.0


# =============================================================================
# Priors
# =============================================================================


def test_flat_prior_is_zero():
    assert FlatPrior()(toy_model().params) == 0.0


def test_independent_prior_matches_scipy():
    m = toy_model()
    prior = IndependentPrior({"leaf0.mu0": (0.1, 2.0),
                              "leaf0.sigma0": (-1.0, 0.5)})
    got = prior(m.params)
    mu = float(m.params.sde.mu[0])
    sig = float(m.params.sde.sigma[0])
    want = (stats.norm.logpdf(mu, 0.1, 2.0)
            + stats.lognorm.logpdf(sig, 0.5, scale=math.exp(-1.0)))
    assert got == pytest.approx(want, rel=1e-12)


def test_prior_rejects_unknown_name_and_bad_scale():
    with pytest.raises(ParamError):
        IndependentPrior({"x": (0.0, 0.0)})
    prior = IndependentPrior({"nope": (0.0, 1.0)})
    with pytest.raises(ParamError):
        prior(toy_model().params)


# =============================================================================
# Single steps
# =============================================================================


def test_first_iteration_always_accepts():
    m = toy_model()
    loglik, proposal, calls = toy_chain_pieces(ll_value=-1e6)
    state = MetropState(m.params, VERY_SMALL_LL, False, 0)
    out = pmmh_step(state, loglik, FlatPrior(), proposal,
                    np.random.default_rng(0))
    assert out.accepted
    assert out.ll == -1e6
    assert out.iteration == 1


def test_loglik_called_every_iteration():
    m = toy_model()
    loglik, proposal, calls = toy_chain_pieces()
    state = MetropState(m.params, VERY_SMALL_LL, False, 0)
    rng = np.random.default_rng(1)
    for _ in range(50):
        state = pmmh_step(state, loglik, FlatPrior(), proposal, rng)
    assert len(calls) == 50


def test_rejection_keeps_params_and_ll():
    m = toy_model()
    proposal = RandomWalkProposal({"leaf0.mu0": 0.1})
    state = MetropState(m.params, -5.0, True, 3)
    # A proposal this much worse is (numerically) never accepted.
    out = pmmh_step(state, lambda p: -1e9, FlatPrior(), proposal,
                    np.random.default_rng(2))
    assert not out.accepted
    assert out.params is state.params
    assert out.ll == -5.0
    assert out.iteration == 4


def test_filter_failure_scores_minus_inf():
    m = toy_model()
    proposal = RandomWalkProposal({"leaf0.mu0": 0.1})
    state = MetropState(m.params, -5.0, True, 0)

    def broken(params):
        raise AllWeightsZeroError("boom")

    out = pmmh_step(state, broken, FlatPrior(), proposal,
                    np.random.default_rng(3))
    assert not out.accepted and out.ll == -5.0


# =============================================================================
# Whole chains
# =============================================================================


def test_chain_emission_count_and_determinism():
    m = toy_model()
    data = simulate_at_times(m, np.arange(1.0, 31.0),
                             np.random.default_rng(7)).observations
    cfg = PmmhConfig(iterations=100, step_sizes={"leaf0.mu0": 0.1},
                     burn_in=20, thin=4, n_particles=50, seed=5)
    states = list(pmmh_chain(m, data, m.params, cfg))
    assert len(states) == 20
    assert [s.iteration for s in states] == list(range(24, 101, 4))
    again = list(pmmh_chain(m, data, m.params, cfg))
    assert [s.ll for s in states] == [s.ll for s in again]
    rate = acceptance_rate(states)
    assert 0.0 <= rate <= 1.0


def test_chain_config_validation():
    with pytest.raises(ParamError):
        PmmhConfig(iterations=0, step_sizes=0.1)
    with pytest.raises(ParamError):
        PmmhConfig(iterations=10, burn_in=10, step_sizes=0.1)
    with pytest.raises(ParamError):
        PmmhConfig(iterations=10, thin=0, step_sizes=0.1)


def test_batch_means_se_and_posterior_mean():
    rng = np.random.default_rng(0)
    x = rng.normal(size=4096)
    se = batch_means_se(x, n_batches=32)
    assert se == pytest.approx(1.0 / math.sqrt(4096), rel=0.5)
    with pytest.raises(ParamError):
        batch_means_se(x[:10], n_batches=32)

    m = toy_model()
    states = [MetropState(m.params, -1.0, True, i) for i in range(5)]
    mean_tree = posterior_mean(states)
    assert np.array_equal(flatten_params(mean_tree)[0],
                          flatten_params(m.params)[0])
