"""Compiled particle-filter kernel for closed-form-transition models.

This is a performance detail, not a second sampler: the kernel consumes
the random generator in exactly the order the numpy engine does (resample
draws, then one row-major normal block per step) and evaluates the same
clamped polynomial exponential, so for a given seed both engines walk the
same ancestor choices and agree on the log-likelihood to floating-point
rounding.  Keep any change here in lockstep with
:mod:`pompkit.filtering` and :mod:`pompkit.numerics`.

Supported models: every leaf transition Brownian or mean-reverting
(affine-Gaussian coefficients precomputed per unique gap outside the
kernel), observations either counts with log link or measurements with
identity link.  Everything else runs on the numpy engine.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import AllWeightsZeroError
from .numerics import (EXP_C2, EXP_C3, EXP_C4, EXP_FRAC_TABLE,
                       EXP_UNDERFLOW, LN2_256_HI, LN2_256_LO, LOG2E_256,
                       LOG_RATE_MAX, LOG_RATE_MIN, POW2_OFFSET, POW2_TABLE)


@njit(cache=True, fastmath=True, inline="always")
def _fexp(x):
    # Mirrors numerics.fastexp for nonpositive weight arguments and clamped
    # rate arguments; saturation above EXP_OVERFLOW never triggers here
    # because rate arguments arrive clamped to LOG_RATE_MAX.
    if x < EXP_UNDERFLOW:
        return 0.0
    n = np.rint(x * LOG2E_256)
    r = (x - n * LN2_256_HI) - n * LN2_256_LO
    p = 1.0 + r * (1.0 + r * (EXP_C2 + r * (EXP_C3 + r * EXP_C4)))
    i = np.int64(n)
    return POW2_TABLE[(i >> 8) + POW2_OFFSET] * (EXP_FRAC_TABLE[i & 255] * p)


@njit(cache=True, fastmath=True)
def _filter_ll(rng, n, mean, sd, coef_a, coef_b, coef_s, dt_idx, f, ys,
               obs_const, obs_kind, c0, inv2v, resample_kind):
    dim = mean.shape[0]
    x_prev = np.empty((n, dim))
    x_next = np.empty((n, dim))
    for i in range(n):
        for d in range(dim):
            x_prev[i, d] = mean[d] + sd[d] * rng.standard_normal()
    # Uniform initial weights give the exact cumulative 1.0, 2.0, ..., n.
    cum = np.empty(n)
    for i in range(n):
        cum[i] = i + 1.0
    lw = np.empty(n)
    us = np.empty(n)
    ll = 0.0
    ln_n = np.log(n)
    n_obs = ys.shape[0]
    for k in range(n_obs):
        u = dt_idx[k]
        total = cum[n - 1]
        yk = ys[k]
        ck = obs_const[k]
        u0 = 0.0
        if resample_kind == 1:
            u0 = rng.random()
        else:
            for i in range(n):
                us[i] = rng.random()
        mx = -np.inf
        j = 0
        for i in range(n):
            if resample_kind == 0:
                target = us[i] * total
                lo = 0
                hi = n
                while lo < hi:
                    mid = (lo + hi) >> 1
                    if cum[mid] <= target:
                        lo = mid + 1
                    else:
                        hi = mid
                j = min(lo, n - 1)
            else:
                if resample_kind == 1:
                    pos = (i + u0) / n * total
                else:
                    pos = (i + us[i]) / n * total
                while j < n - 1 and cum[j] <= pos:
                    j += 1
            gi = 0.0
            for d in range(dim):
                xv = (coef_a[u, d] * x_prev[j, d] + coef_b[u, d]
                      + coef_s[u, d] * rng.standard_normal())
                x_next[i, d] = xv
                gi += f[k, d] * xv
            if obs_kind == 1:
                if gi < LOG_RATE_MIN:
                    gi = LOG_RATE_MIN
                elif gi > LOG_RATE_MAX:
                    gi = LOG_RATE_MAX
                v = yk * gi - _fexp(gi) - ck
            else:
                r = yk - gi
                v = -c0 - r * r * inv2v
            lw[i] = v
            if v > mx:
                mx = v
        if not mx > -np.inf:
            return np.nan
        c = 0.0
        for i in range(n):
            c += _fexp(lw[i] - mx)
            cum[i] = c
        if not c > 0.0:
            return np.nan
        ll += mx + np.log(c) - ln_n
        tmp = x_prev
        x_prev = x_next
        x_next = tmp
    return ll


def filter_log_likelihood(rng: np.random.Generator, n_particles: int,
                          mean: np.ndarray, sd: np.ndarray,
                          coef_a: np.ndarray, coef_b: np.ndarray,
                          coef_s: np.ndarray, dt_idx: np.ndarray,
                          f_matrix: np.ndarray, values: np.ndarray,
                          obs_const: np.ndarray, obs_kind: int,
                          c0: float, inv2v: float,
                          resample_kind: int) -> float:
    """Run the compiled filter; raises if every weight underflows."""
    ll = _filter_ll(rng, n_particles,
                    np.ascontiguousarray(mean), np.ascontiguousarray(sd),
                    np.ascontiguousarray(coef_a), np.ascontiguousarray(coef_b),
                    np.ascontiguousarray(coef_s), np.ascontiguousarray(dt_idx),
                    np.ascontiguousarray(f_matrix), np.ascontiguousarray(values),
                    np.ascontiguousarray(obs_const), obs_kind,
                    float(c0), float(inv2v), resample_kind)
    if math.isnan(ll):
        raise AllWeightsZeroError("all particle weights underflowed to zero")
    return float(ll)


def warmup() -> None:
    """Force kernel compilation (useful before timing anything)."""
    rng = np.random.default_rng(0)
    one = np.ones((1, 1))
    filter_log_likelihood(rng, 2, np.zeros(1), np.ones(1), one,
                          np.zeros((1, 1)), np.ones((1, 1)),
                          np.zeros(1, dtype=np.int64), np.ones((1, 1)),
                          np.zeros(1), np.zeros(1), 1, 0.0, 0.0, 0)
