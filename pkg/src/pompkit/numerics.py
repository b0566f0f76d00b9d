"""Shared numeric primitives for the filtering stack.

The particle filter exists in two interchangeable engines: a vectorised
numpy implementation and a compiled kernel (see :mod:`pompkit.accel`).
Both consume random draws in the same order and evaluate weights with the
same exponential so that a fixed seed gives the same trajectory through
the sampler in either engine (floating-point rounding aside).

``fastexp`` is that shared exponential: argument reduction against
exact-dyadic pieces of ``ln 2 / 256``, a 256-entry table of
``2**(j/256)``, and a degree-4 Taylor polynomial on the reduced interval
``|r| <= ln 2 / 512``.  Relative error is within a couple of ulps, and
the short dependency chain keeps the compiled engine's per-particle cost
down (glibc's ``exp`` cannot be called from vectorised kernel code).
The compiled engine repeats these constants verbatim; keep the two in
sync.
"""
from __future__ import annotations

import math

import numpy as np

# Hazard / rate clamp applied by exponential-type link functions.
RATE_MIN = 1e-12
RATE_MAX = 1e12
LOG_RATE_MIN = math.log(RATE_MIN)
LOG_RATE_MAX = math.log(RATE_MAX)

# Probability clamp for logistic links.
PROB_EPS = 1e-12

# Arguments below EXP_UNDERFLOW return exactly 0.0; above EXP_OVERFLOW they
# saturate.  Both bounds keep the power-of-two table index in range.
EXP_UNDERFLOW = -700.0
EXP_OVERFLOW = 700.0

# ln 2 split into a high part exact in double precision (20 trailing zero
# mantissa bits) and a low correction.  Scaling both by 2**-8 is exact, and
# n * LN2_256_HI stays exact for the |n| <= 700 * 256 / ln 2 < 2**19 range
# the clamps allow, so the reduced argument r carries no cancellation error.
LOG2E = 1.4426950408889634
LN2_HI = 6.93147180369123816490e-01
LN2_LO = 1.90821492927058770002e-10
LOG2E_256 = LOG2E * 256.0
LN2_256_HI = LN2_HI / 256.0
LN2_256_LO = LN2_LO / 256.0

# Taylor coefficients 1/k!; degree 4 leaves a remainder below 4e-17 on the
# reduced interval.
EXP_C2 = 1.0 / 2.0
EXP_C3 = 1.0 / 6.0
EXP_C4 = 1.0 / 24.0

# 2**(j/256) for j = 0..255; correctly rounded doubles.
EXP_FRAC_TABLE = np.exp2(np.arange(256) / 256.0)
EXP_FRAC_TABLE.flags.writeable = False

# 2**q for every exponent the clamps allow; plain multiplication by a table
# entry beats ldexp by an order of magnitude in the compiled kernel because
# it stays inlineable and vectorisable.
POW2_OFFSET = 1074
POW2_TABLE = np.array([math.ldexp(1.0, k) for k in range(-1074, 1024)])
POW2_TABLE.flags.writeable = False


def fastexp(x):
    """Exponential shared by both filter engines.

    Accepts a scalar or ndarray.  Arguments are saturated at
    ``EXP_OVERFLOW`` and flushed to exactly ``0.0`` below
    ``EXP_UNDERFLOW``.
    """
    a = np.asarray(x, dtype=np.float64)
    scalar = a.ndim == 0
    a = np.atleast_1d(a)
    under = a < EXP_UNDERFLOW
    a = np.where(under, 0.0, np.minimum(a, EXP_OVERFLOW))
    n = np.rint(a * LOG2E_256)
    r = (a - n * LN2_256_HI) - n * LN2_256_LO
    p = 1.0 + r * (1.0 + r * (EXP_C2 + r * (EXP_C3 + r * EXP_C4)))
    i = n.astype(np.int64)
    # i >> 8 floors and i & 255 is the matching nonnegative remainder, so
    # exp(x) = 2**q * 2**(j/256) * exp(r) with q inside the table range.
    out = POW2_TABLE[(i >> 8) + POW2_OFFSET] * (EXP_FRAC_TABLE[i & 255] * p)
    out[under] = 0.0
    return float(out[0]) if scalar else out


def log_weight_normaliser(log_weights: np.ndarray):
    """Return ``(cumulative weights, total, max log-weight, log-sum-exp)``.

    The cumulative sum is a strictly sequential accumulation (the compiled
    engine does the same), and the total is its last entry rather than an
    independently ordered sum, so both engines make identical resampling
    decisions from identical draws.
    """
    mx = float(np.max(log_weights))
    if mx == -np.inf or math.isnan(mx):
        from .errors import AllWeightsZeroError

        raise AllWeightsZeroError("all particle weights underflowed to zero")
    w = fastexp(log_weights - mx)
    cum = np.cumsum(w)
    total = float(cum[-1])
    if total <= 0.0:
        from .errors import AllWeightsZeroError

        raise AllWeightsZeroError("all particle weights underflowed to zero")
    lse = mx + math.log(total)
    return cum, total, mx, lse


def weighted_quantile(values: np.ndarray, weights: np.ndarray, qs) -> np.ndarray:
    """Quantiles of a weighted sample.

    Linear interpolation on the weighted empirical CDF evaluated at the
    midpoint of each observation's probability mass, clamped to the sample
    range at the tails.  Weights need not be normalised.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    keep = weights > 0.0
    if not np.any(keep):
        from .errors import AllWeightsZeroError

        raise AllWeightsZeroError("quantiles of an all-zero weight vector")
    # Zero-weight values carry no mass but would still anchor the
    # interpolation grid; drop them so they cannot drag the tails.
    values, weights = values[keep], weights[keep]
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order]
    cw = np.cumsum(w)
    total = cw[-1]
    positions = (cw - 0.5 * w) / total
    return np.interp(np.asarray(qs, dtype=float), positions, v)


def effective_sample_size(weights: np.ndarray) -> float:
    """Kish effective sample size of a normalised weight vector."""
    weights = np.asarray(weights, dtype=float)
    return 1.0 / float(np.sum(weights * weights))
