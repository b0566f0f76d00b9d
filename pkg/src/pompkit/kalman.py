"""Closed-form references for the linear-Gaussian corner of the toolkit.

A scalar Brownian latent state observed with Gaussian noise admits an
exact filter, which pins down what the particle filter's log-likelihood
should converge to.  The conjugate posterior below plays the same role
for the Metropolis sampler on a fixed-variance Gaussian mean.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import NonmonotoneTimeError, ParamError


def kalman_log_likelihood(times, values, m0: float, c0: float, mu: float,
                          sigma: float, obs_var: float,
                          t_start: float = 0.0):
    """Exact log-likelihood of Gaussian observations on a Brownian state.

    The state follows ``dx = mu dt + sigma dW`` from a Normal(m0, c0)
    start at ``t_start``; each observation is the state plus Normal(0,
    obs_var) noise.  Returns ``(loglik, filtered_means, filtered_vars)``.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise ParamError("times and values must be matching 1-D arrays")
    if c0 < 0 or obs_var < 0:
        raise ParamError("variances must be nonnegative")
    if times.shape[0] and times[0] < t_start:
        raise NonmonotoneTimeError("first observation precedes t_start")
    if np.any(np.diff(times) < 0):
        raise NonmonotoneTimeError("times must be nondecreasing")

    m, c = float(m0), float(c0)
    t = float(t_start)
    ll = 0.0
    means = np.empty(times.shape[0])
    variances = np.empty(times.shape[0])
    for i in range(times.shape[0]):
        dt = float(times[i]) - t
        m_pred = m + mu * dt
        c_pred = c + sigma * sigma * dt
        s = c_pred + obs_var
        if s <= 0:
            raise ParamError("predictive variance is not positive")
        resid = values[i] - m_pred
        ll += -0.5 * (math.log(2.0 * math.pi * s) + resid * resid / s)
        gain = c_pred / s
        m = m_pred + gain * resid
        c = c_pred * (1.0 - gain)
        t = float(times[i])
        means[i] = m
        variances[i] = c
    return ll, means, variances


def conjugate_posterior(prior_mean: float, prior_var: float, obs_var: float,
                        values) -> tuple[float, float]:
    """Posterior of a Gaussian mean under i.i.d. Gaussian observations.

    ``prior_var`` may be infinite for a flat prior.  Returns the posterior
    mean and variance.
    """
    values = np.asarray(values, dtype=float)
    if obs_var <= 0:
        raise ParamError("observation variance must be positive")
    if prior_var <= 0:
        raise ParamError("prior variance must be positive")
    n = values.shape[0]
    prior_prec = 0.0 if math.isinf(prior_var) else 1.0 / prior_var
    if n == 0 and prior_prec == 0.0:
        raise ParamError("flat prior with no data has no posterior")
    post_prec = prior_prec + n / obs_var
    post_mean = (prior_mean * prior_prec + values.sum() / obs_var) / post_prec
    return float(post_mean), float(1.0 / post_prec)
