"""Observation models: links, densities against scipy, seasonal basis."""

import math

import numpy as np
import pytest
from scipy import stats

from pompkit.errors import (ObservationError, ParamError, ShapeMismatchError,
                            UnusableIdentityError)
from pompkit.models import (event_log_density, fourier_vector,
                            phase_amplitude)
from pompkit.models import validate_shape
from pompkit import (BrownianParams, InitialStateParams, LeafParams,
                     OrnsteinUhlenbeckParams, bernoulli_model, gaussian_model,
                     lgcp_model, poisson_model, seasonal_model)
from pompkit.compose import identity_model

# =============================================================================
# Helpers
# =============================================================================


def scalar_leaf(kind="poisson", mean=0.0, sd=1.0, mu=0.0, sigma=0.5,
                scale=None):
    init = InitialStateParams(mean=[mean], sd=[sd])
    sde = BrownianParams(mu=[mu], sigma=[sigma])
    if kind == "poisson":
        return poisson_model(sde=sde, init=init)
    if kind == "bernoulli":
        return bernoulli_model(sde=sde, init=init)
    if kind == "gaussian":
        return gaussian_model(sde=sde, init=init, scale=scale or 1.0)
    if kind == "lgcp":
        return lgcp_model(sde=sde, init=init)
    raise ValueError(kind)


# =============================================================================
# Links
# =============================================================================


def test_poisson_link_is_exp():
    m = scalar_leaf("poisson")
    assert m.link(0.0) == pytest.approx(1.0)
    assert m.link(2.0) == pytest.approx(math.exp(2.0), rel=1e-8)
    # Saturation, not overflow.
    assert np.isfinite(m.link(1e6))
    assert m.link(-1e6) > 0.0


def test_bernoulli_link_is_logistic():
    m = scalar_leaf("bernoulli")
    assert m.link(0.0) == pytest.approx(0.5)
    assert m.link(3.0) == pytest.approx(1.0 / (1.0 + math.exp(-3.0)), rel=1e-8)
    assert 0.0 < m.link(-800.0) < 1e-6
    assert 1.0 - m.link(800.0) < 1e-6


def test_gaussian_link_is_identity():
    m = scalar_leaf("gaussian", scale=2.0)
    assert m.link(-4.2) == -4.2


# =============================================================================
# Densities against scipy
# =============================================================================


def test_poisson_log_density_matches_scipy():
    m = scalar_leaf("poisson")
    for lam in (0.3, 1.0, 2.0, 17.5):
        for y in (0.0, 1.0, 3.0, 20.0):
            want = stats.poisson.logpmf(int(y), lam)
            assert m.log_density(lam, y) == pytest.approx(want, abs=1e-8)


def test_poisson_rejects_bad_counts():
    m = scalar_leaf("poisson")
    with pytest.raises(ObservationError):
        m.log_density(1.0, -1.0)
    with pytest.raises(ObservationError):
        m.log_density(1.0, 2.5)


def test_bernoulli_log_density_matches_scipy():
    m = scalar_leaf("bernoulli")
    for p in (0.2, 0.5, 0.9):
        for y in (0.0, 1.0):
            want = stats.bernoulli.logpmf(int(y), p)
            assert m.log_density(p, y) == pytest.approx(want, abs=1e-9)
    with pytest.raises(ObservationError):
        m.log_density(0.5, 0.25)


def test_gaussian_log_density_matches_scipy():
    scale = 0.7  # variance, not standard deviation
    m = scalar_leaf("gaussian", scale=scale)
    for eta in (-1.0, 0.0, 2.5):
        for y in (-2.0, 0.1, 3.0):
            want = stats.norm.logpdf(y, loc=eta, scale=math.sqrt(scale))
            assert m.log_density(eta, y) == pytest.approx(want, rel=1e-12)


def test_gaussian_batch_matches_scalar():
    m = scalar_leaf("gaussian", scale=0.7)
    etas = np.linspace(-2, 2, 9)
    batch = m.log_density_batch(etas, 0.3)
    for eta, got in zip(etas, batch):
        assert got == m.log_density(float(eta), 0.3)


def test_lgcp_density_goes_through_event_machinery():
    m = scalar_leaf("lgcp")
    with pytest.raises(ObservationError):
        m.log_density(1.0, 0.5)
    # Event log-density: log hazard at the event minus accumulated hazard.
    assert event_log_density(2.0, 3.0) == pytest.approx(math.log(2.0) - 3.0)
    assert np.isfinite(event_log_density(0.0, 1.0))  # clamped, not -inf


# =============================================================================
# Seasonal structure
# =============================================================================


def test_fourier_vector_values():
    period = 24.0
    f = fourier_vector(6.0, period, 2)  # quarter period
    assert f == pytest.approx([0.0, 1.0, -1.0, 0.0], abs=1e-12)
    f0 = fourier_vector(0.0, period, 3)
    assert f0 == pytest.approx([1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
    with pytest.raises(ParamError):
        fourier_vector(1.0, 0.0, 1)
    with pytest.raises(ParamError):
        fourier_vector(1.0, 24.0, 0)


def test_seasonal_model_signal():
    xc, xs = 1.2, -0.4
    m = seasonal_model(period=24.0, harmonics=1, scale=0.5,
                       sde=BrownianParams(mu=[0.0, 0.0], sigma=[0.1, 0.1]),
                       init=InitialStateParams(mean=[xc, xs], sd=[0.0, 0.0]))
    assert m.dim == 2
    w = 2.0 * math.pi / 24.0
    amp, phase = phase_amplitude(xc, xs)
    for t in (0.0, 3.7, 11.0):
        gamma = float(np.array([xc, xs]) @ m.transform_vector(t))
        assert gamma == pytest.approx(xc * math.cos(w * t) + xs * math.sin(w * t))
        assert gamma == pytest.approx(amp * math.cos(w * t + phase))


def test_phase_amplitude_zero_vector():
    amp, phase = phase_amplitude(0.0, 0.0)
    assert amp == 0.0
    assert math.isnan(phase)


def test_seasonal_dim_must_be_two_per_harmonic():
    with pytest.raises(ParamError):
        seasonal_model(period=24.0, harmonics=2, scale=0.5,
                       sde=BrownianParams(mu=[0.0], sigma=[0.1]),
                       init=InitialStateParams(mean=[0.0], sd=[0.1]))


# =============================================================================
# Draws and stepping
# =============================================================================


def test_initial_draw_matrix_moments():
    m = scalar_leaf("gaussian", mean=2.0, sd=0.5, scale=1.0)
    rng = np.random.default_rng(0)
    x = m.initial_draw_matrix(100_000, rng)
    assert x.shape == (100_000, 1)
    assert x.mean() == pytest.approx(2.0, abs=0.01)
    assert x.std() == pytest.approx(0.5, rel=0.02)


def test_observation_draws_have_right_moments():
    rng = np.random.default_rng(1)
    m = scalar_leaf("poisson")
    lam = 4.0
    ys = m.observation_draw_batch(np.full(50_000, lam), rng)
    assert ys.mean() == pytest.approx(lam, abs=0.05)
    mb = scalar_leaf("bernoulli")
    ps = mb.observation_draw_batch(np.full(50_000, 0.3), rng)
    assert set(np.unique(ps)) <= {0.0, 1.0}
    assert ps.mean() == pytest.approx(0.3, abs=0.01)


def test_step_matrix_deterministic_when_sigma_zero():
    m = scalar_leaf("poisson", mu=0.25, sigma=0.0)
    x = np.array([[1.0], [2.0]])
    out = m.step_matrix(x, 2.0, np.zeros((2, 1)))
    assert np.allclose(out, [[1.5], [2.5]])


def test_validate_shape_catches_mismatches():
    m = scalar_leaf("poisson")
    good = m.params
    with pytest.raises(ShapeMismatchError):
        validate_shape(m, LeafParams(
            init=InitialStateParams(mean=[0.0, 0.0], sd=[1.0, 1.0]),
            sde=BrownianParams(mu=[0.0, 0.0], sigma=[1.0, 1.0])))
    with pytest.raises(ShapeMismatchError):
        validate_shape(m, LeafParams(init=good.init, sde=good.sde, scale=1.0))
    mg = scalar_leaf("gaussian", scale=1.0)
    with pytest.raises(ShapeMismatchError):
        validate_shape(mg, LeafParams(init=good.init, sde=good.sde))


def test_identity_model_has_no_observation():
    ident = identity_model()
    assert ident.dim == 0
    with pytest.raises(UnusableIdentityError):
        ident.observation_leaf()


def test_ou_leaf_round_trip():
    m = gaussian_model(
        sde=OrnsteinUhlenbeckParams(alpha=[2.0], theta=[1.0], sigma=[0.0]),
        init=InitialStateParams(mean=[5.0], sd=[0.0]), scale=0.4)
    x = m.initial_draw_matrix(3, np.random.default_rng(0))
    out = m.step_matrix(x, 1e9, np.zeros((3, 1)))
    assert out == pytest.approx(np.full((3, 1), 1.0))
