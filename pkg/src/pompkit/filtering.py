"""Bootstrap particle filtering over irregularly timestamped streams.

Each step handles one observation: the previous cloud is resampled by its
weights, every survivor is propagated over the (possibly zero, generally
irregular) time gap, and new weights are the observation log-densities.
The running log-likelihood grows by the log of the mean unnormalised
weight.  Nothing is stored beyond the current cloud, so a filter pass
over a stream uses constant memory in the stream length.

Per step the random stream is consumed in a fixed order: resampling draws
first (one uniform for systematic, a block of ``n`` uniforms otherwise),
then one row-major ``(n, draws per particle)`` block of standard normals
for propagation.  The compiled engine (:mod:`pompkit.accel`) follows the
same order, and the thread-parallel mode materialises the draws up front
and farms out only deterministic arithmetic, which is why engines and
thread counts agree on what the sampler does.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import (NonmonotoneTimeError, ParamError, ShapeMismatchError,
                     WeightSumError)
from .models import (BERNOULLI, GAUSSIAN, LGCP, POISSON, Model,
                     validate_shape, _param_list)
from .numerics import (effective_sample_size, fastexp, log_weight_normaliser,
                       weighted_quantile)
from .sde import transition_coefficients
from .trees import (BrownianParams, OrnsteinUhlenbeckParams, ParamTree,
                    StateTree, TimedObservation, unflatten_state)

RESAMPLING_SCHEMES = ("multinomial", "systematic", "stratified")


@dataclass(frozen=True)
class FilterState:
    """Particle cloud after absorbing all observations up to time ``t``.

    ``particles`` holds flattened state vectors, one row per particle;
    ``log_weights`` are normalised.  Event-stream filters additionally
    carry each particle's accumulated hazard integral.
    """

    particles: np.ndarray
    log_weights: np.ndarray
    t: float
    ll: float
    cum_hazard: np.ndarray | None = None

    @property
    def n_particles(self) -> int:
        return self.particles.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """Normalised linear-domain weights."""
        return fastexp(self.log_weights)


@dataclass(frozen=True)
class FilterSummary:
    """Per-observation output of :func:`filter_scan`.

    ``eta_lower``/``eta_upper`` bound the central 99% of the filtered
    signal; the predictive fields are populated when the scan is asked for
    observation-scale bands.
    """

    time: float
    eta_mean: float
    eta_lower: float
    eta_upper: float
    ll_increment: float
    ll: float
    y_mean: float | None = None
    y_lower: float | None = None
    y_upper: float | None = None


def particle_trees(model: Model, state: FilterState) -> list[StateTree]:
    """Materialise the cloud as state trees (a debugging convenience)."""
    template = model.state_template()
    return [unflatten_state(template, row) for row in state.particles]


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def _resample_indices(cum: np.ndarray, total: float, scheme: str,
                      rng: np.random.Generator) -> np.ndarray:
    """Ancestor indices from an unnormalised cumulative weight vector."""
    n = cum.shape[0]
    if scheme == "multinomial":
        targets = rng.random(n) * total
    elif scheme == "systematic":
        u0 = rng.random()
        targets = (np.arange(n) + u0) / n * total
    elif scheme == "stratified":
        targets = (np.arange(n) + rng.random(n)) / n * total
    else:
        raise ParamError(f"unknown resampling scheme {scheme!r}")
    idx = np.searchsorted(cum, targets, side="right")
    return np.minimum(idx, n - 1)


def _checked_cumulative(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.shape[0] == 0:
        raise WeightSumError("weights must be a nonempty 1-D vector")
    if np.any(w < 0) or abs(float(np.sum(w)) - 1.0) > 1e-8:
        raise WeightSumError("weights must be nonnegative and sum to one")
    return np.cumsum(w)


def _take(particles, idx: np.ndarray):
    if isinstance(particles, np.ndarray):
        return particles[idx]
    seq = list(particles)
    return [seq[i] for i in idx]


def resample_multinomial(particles, weights, rng: np.random.Generator):
    """Independent draws from the weighted cloud."""
    cum = _checked_cumulative(weights)
    return _take(particles, _resample_indices(cum, float(cum[-1]), "multinomial", rng))


def resample_systematic(particles, weights, rng: np.random.Generator):
    """One uniform offset, evenly spaced selection points."""
    cum = _checked_cumulative(weights)
    return _take(particles, _resample_indices(cum, float(cum[-1]), "systematic", rng))


def resample_stratified(particles, weights, rng: np.random.Generator):
    """One uniform per equal-probability stratum."""
    cum = _checked_cumulative(weights)
    return _take(particles, _resample_indices(cum, float(cum[-1]), "stratified", rng))


# ---------------------------------------------------------------------------
# Core step
# ---------------------------------------------------------------------------

def init_filter(model: Model, n_particles: int, rng: np.random.Generator,
                params: ParamTree | None = None, t_start: float = 0.0,
                ) -> FilterState:
    """Draw the initial cloud at ``t_start`` with uniform weights."""
    if n_particles < 1:
        raise ParamError("particle count must be at least 1")
    tree = model.params if params is None else params
    validate_shape(model, tree)
    particles = model.initial_draw_matrix(n_particles, rng, tree)
    log_weights = np.full(n_particles, -math.log(n_particles))
    cum_hazard = (np.zeros(n_particles)
                  if model.observation_family == LGCP else None)
    return FilterState(particles=particles, log_weights=log_weights,
                       t=float(t_start), ll=0.0, cum_hazard=cum_hazard)


def _gamma_of(model: Model, params: ParamTree, x: np.ndarray, t: float,
              f: np.ndarray | None = None) -> np.ndarray:
    """Linear signal per particle, accumulated coordinate by coordinate so
    every engine and thread split performs the identical additions."""
    if f is None:
        f = model.transform_vector(t)
    gamma = np.zeros(x.shape[0])
    for d in range(f.shape[0]):
        gamma += f[d] * x[:, d]
    return gamma


def _log_density_from_gamma(model: Model, params: ParamTree,
                            gamma: np.ndarray, y: float) -> np.ndarray:
    """Observation log-density per particle, straight from the signal.

    For counts this evaluates ``y*g - exp(g) - ln(y!)`` on the clamped
    signal instead of round-tripping through the rate, which is the same
    algebra the compiled kernel uses; other families go through the public
    link/density pair.
    """
    if model.observation_family == POISSON:
        if not np.isfinite(y) or y < 0 or y != math.floor(y):
            from .errors import ObservationError

            raise ObservationError(
                f"count observations must be nonnegative integers, got {y}")
        from .numerics import LOG_RATE_MAX, LOG_RATE_MIN

        g = np.clip(gamma, LOG_RATE_MIN, LOG_RATE_MAX)
        return y * g - fastexp(g) - gammaln(y + 1.0)
    return model.log_density_batch(model.link_batch(gamma), y, params)


def _split_ranges(n: int, n_threads: int) -> list[slice]:
    bounds = np.linspace(0, n, n_threads + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _propagate(model: Model, params: ParamTree, x: np.ndarray, dt: float,
               eps: np.ndarray, n_threads: int) -> np.ndarray:
    if n_threads <= 1 or x.shape[0] < 2 * n_threads:
        return model.step_matrix(x, dt, eps, params)
    out = np.empty_like(x)
    ranges = _split_ranges(x.shape[0], n_threads)
    with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
        futures = [pool.submit(
            lambda sl: out.__setitem__(sl, model.step_matrix(x[sl], dt, eps[sl], params)),
            sl) for sl in ranges]
        for fut in futures:
            fut.result()
    return out


def _step_cloud(model: Model, params: ParamTree, state: FilterState,
                t_new: float, rng: np.random.Generator, resampling: str,
                ess_threshold: float | None, n_threads: int):
    """Resample-then-propagate shared by every observation kind.

    Returns ``(propagated cloud, prior log-weights carried into the update,
    ancestor indices)``.
    """
    dt = t_new - state.t
    if dt < 0:
        raise NonmonotoneTimeError(
            f"observation at {t_new} precedes filter time {state.t}")
    n = state.n_particles
    cum, total, _, _ = log_weight_normaliser(state.log_weights)
    skip = False
    if ess_threshold is not None:
        skip = effective_sample_size(fastexp(state.log_weights)) >= ess_threshold
    if skip:
        idx = np.arange(n)
        carried = state.log_weights
    else:
        idx = _resample_indices(cum, total, resampling, rng)
        carried = np.full(n, -math.log(n))
    eps = rng.standard_normal((n, model.draw_block_width(params)))
    x = _propagate(model, params, state.particles[idx], dt, eps, n_threads)
    return x, carried, idx


def _reweight(carried: np.ndarray, log_dens: np.ndarray):
    """Combine carried weights with observation densities.

    Returns normalised log-weights and the log-likelihood increment
    ``ln sum(w_carried * w_obs)`` (with carried weights normalised, this is
    the log mean unnormalised weight whenever resampling just ran).
    """
    combined = carried + log_dens
    _, _, _, lse = log_weight_normaliser(combined)
    return combined - lse, lse


def filter_step(model: Model, state: FilterState, y: TimedObservation,
                rng: np.random.Generator, params: ParamTree | None = None,
                resampling: str = "multinomial",
                ess_threshold: float | None = None,
                n_threads: int = 1) -> FilterState:
    """Absorb one observation and return the updated filter state."""
    tree = model.params if params is None else params
    x, carried, _ = _step_cloud(model, tree, state, y.time, rng, resampling,
                                ess_threshold, n_threads)
    f = model.transform_vector(y.time)
    if n_threads > 1 and x.shape[0] >= 2 * n_threads:
        log_dens = np.empty(x.shape[0])
        ranges = _split_ranges(x.shape[0], n_threads)
        with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
            def work(sl):
                g = _gamma_of(model, tree, x[sl], y.time, f)
                log_dens[sl] = _log_density_from_gamma(model, tree, g, y.value)
            for fut in [pool.submit(work, sl) for sl in ranges]:
                fut.result()
    else:
        gamma = _gamma_of(model, tree, x, y.time, f)
        log_dens = _log_density_from_gamma(model, tree, gamma, y.value)
    log_weights, ll_inc = _reweight(carried, log_dens)
    return FilterState(particles=x, log_weights=log_weights, t=y.time,
                       ll=state.ll + ll_inc, cum_hazard=None)


# ---------------------------------------------------------------------------
# Event-stream (log-Gaussian Cox) step
# ---------------------------------------------------------------------------

def lgcp_filter_step(model: Model, state: FilterState, event_time: float,
                     rng: np.random.Generator, params: ParamTree | None = None,
                     grid_dt: float | None = None,
                     resampling: str = "multinomial") -> FilterState:
    """Absorb one event time under a log-linked hazard.

    The hazard integral between events is accumulated with a left-rectangle
    rule on a grid of spacing at most ``grid_dt`` (default: a thousandth of
    the gap), and each particle's weight is the event log-density
    ``ln hazard(event) - integral``.
    """
    tree = model.params if params is None else params
    dt = event_time - state.t
    if dt < 0:
        raise NonmonotoneTimeError(
            f"event at {event_time} precedes filter time {state.t}")
    if grid_dt is None:
        grid_dt = dt / 1000.0 if dt > 0 else 1.0
    if grid_dt <= 0:
        raise ParamError("grid spacing must be positive")
    n = state.n_particles
    cum, total, _, _ = log_weight_normaliser(state.log_weights)
    idx = _resample_indices(cum, total, resampling, rng)
    carried = np.full(n, -math.log(n))
    x = state.particles[idx]
    hazard_acc = (state.cum_hazard[idx] if state.cum_hazard is not None
                  else np.zeros(n))
    width = model.draw_block_width(tree)
    integral = np.zeros(n)
    steps = max(1, math.ceil(dt / grid_dt)) if dt > 0 else 0
    delta = dt / steps if steps else 0.0
    for j in range(steps):
        t_j = state.t + j * delta
        hazard = model.link_batch(_gamma_of(model, tree, x, t_j))
        integral += hazard * delta
        eps = rng.standard_normal((n, width))
        x = model.step_matrix(x, delta, eps, tree)
    hazard_end = model.link_batch(_gamma_of(model, tree, x, event_time))
    log_dens = np.log(hazard_end) - integral
    log_weights, ll_inc = _reweight(carried, log_dens)
    return FilterState(particles=x, log_weights=log_weights, t=event_time,
                       ll=state.ll + ll_inc, cum_hazard=hazard_acc + integral)


# ---------------------------------------------------------------------------
# Whole-stream drivers
# ---------------------------------------------------------------------------

def filter_scan(model: Model, data: Iterable[TimedObservation],
                n_particles: int, rng: np.random.Generator,
                params: ParamTree | None = None, t_start: float = 0.0,
                resampling: str = "multinomial",
                ess_threshold: float | None = None, n_threads: int = 1,
                predictive: bool = False, band: tuple[float, float] = (0.005, 0.995),
                grid_dt: float | None = None,
                ) -> Iterator[FilterSummary]:
    """Filter a stream lazily, yielding one summary per observation.

    The running ``ll`` after ``k`` observations equals
    :func:`path_log_likelihood` of those ``k`` observations under the same
    seed, because both fold the identical step.  Predictive bands draw one
    observation per particle from a generator spawned off ``rng`` so the
    main stream is untouched.
    """
    tree = model.params if params is None else params
    validate_shape(model, tree)
    is_events = model.observation_family == LGCP
    side_rng = rng.spawn(1)[0] if predictive and not is_events else None
    state = init_filter(model, n_particles, rng, tree, t_start)
    uniform = np.full(n_particles, 1.0 / n_particles)
    for obs in data:
        prev_ll = state.ll
        if side_rng is not None:
            # The particle positions after the step are the one-step-ahead
            # cloud; their predictive weights are the ones carried through
            # resampling, not the posterior ones.
            skipped = (ess_threshold is not None and effective_sample_size(
                state.weights) >= ess_threshold)
            pred_w = state.weights if skipped else uniform
        if is_events:
            state = lgcp_filter_step(model, state, obs.time, rng, tree,
                                     grid_dt=grid_dt, resampling=resampling)
        else:
            state = filter_step(model, state, obs, rng, tree,
                                resampling=resampling,
                                ess_threshold=ess_threshold,
                                n_threads=n_threads)
        gamma = _gamma_of(model, tree, state.particles, state.t)
        eta = model.link_batch(gamma)
        w = state.weights
        eta_mean = float(np.dot(w, eta))
        lo, hi = weighted_quantile(eta, w, band)
        summary = FilterSummary(time=state.t, eta_mean=eta_mean,
                                eta_lower=float(lo), eta_upper=float(hi),
                                ll_increment=state.ll - prev_ll, ll=state.ll)
        if side_rng is not None:
            draws = model.observation_draw_batch(eta, side_rng, tree)
            y_lo, y_hi = weighted_quantile(draws, pred_w, band)
            summary = replace(summary, y_mean=float(np.dot(pred_w, draws)),
                              y_lower=float(y_lo), y_upper=float(y_hi))
        yield summary


def path_log_likelihood(model: Model, data: Iterable[TimedObservation],
                        n_particles: int, rng: np.random.Generator,
                        params: ParamTree | None = None, t_start: float = 0.0,
                        resampling: str = "multinomial",
                        engine: str = "auto",
                        ess_threshold: float | None = None,
                        n_threads: int = 1,
                        grid_dt: float | None = None) -> float:
    """Marginal log-likelihood estimate of a finite stream.

    ``engine='numpy'`` folds :func:`filter_step`; ``engine='numba'``
    runs the compiled kernel, which consumes the identical random stream
    and agrees with the numpy engine to floating-point rounding.  The
    default picks the compiled kernel whenever the model qualifies
    (closed-form transitions, count or measurement observations, no
    effective-sample-size gating, single thread).
    """
    tree = model.params if params is None else params
    validate_shape(model, tree)
    obs = data if isinstance(data, list) else list(data)
    if not obs:
        return 0.0
    fn = prepared_log_likelihood(model, obs, n_particles, t_start=t_start,
                                 resampling=resampling, engine=engine,
                                 ess_threshold=ess_threshold,
                                 n_threads=n_threads, grid_dt=grid_dt)
    return fn(tree, rng)


def _kernel_eligible(model: Model, ess_threshold, n_threads: int,
                     resampling: str) -> bool:
    if ess_threshold is not None or n_threads > 1:
        return False
    if resampling not in RESAMPLING_SCHEMES:
        return False
    if model.dim < 1:
        return False
    if model.observation_family not in (POISSON, GAUSSIAN):
        return False
    return all(isinstance(p.sde, (BrownianParams, OrnsteinUhlenbeckParams))
               for p in _param_list(model.params))


def prepared_log_likelihood(model: Model, data: Sequence[TimedObservation],
                            n_particles: int, t_start: float = 0.0,
                            resampling: str = "multinomial",
                            engine: str = "auto",
                            ess_threshold: float | None = None,
                            n_threads: int = 1,
                            grid_dt: float | None = None):
    """Build a reusable ``(params, rng) -> ll`` closure for one dataset.

    Everything that does not depend on parameters (observation arrays,
    transform vectors, gap structure, count normalising constants) is
    computed once, which matters when a sampler evaluates thousands of
    parameter proposals against the same data.
    """
    if engine not in ("auto", "numpy", "numba"):
        raise ParamError(f"unknown engine {engine!r}")
    obs = list(data)
    times = np.array([o.time for o in obs], dtype=float)
    values = np.array([o.value for o in obs], dtype=float)
    if times.shape[0]:
        gaps = np.diff(np.concatenate([[t_start], times]))
        if np.any(gaps < 0):
            raise NonmonotoneTimeError("observation times must be nondecreasing")
    use_kernel = engine == "numba" or (
        engine == "auto" and _kernel_eligible(model, ess_threshold, n_threads,
                                              resampling))
    if model.observation_family == LGCP:
        if engine == "numba":
            raise ParamError("event-stream models run on the numpy engine")

        def event_ll(params: ParamTree, rng: np.random.Generator) -> float:
            state = init_filter(model, n_particles, rng, params, t_start)
            for o in obs:
                state = lgcp_filter_step(model, state, o.time, rng, params,
                                         grid_dt=grid_dt,
                                         resampling=resampling)
            return state.ll

        return event_ll
    if not use_kernel:
        def numpy_ll(params: ParamTree, rng: np.random.Generator) -> float:
            state = init_filter(model, n_particles, rng, params, t_start)
            for o in obs:
                state = filter_step(model, state, o, rng, params,
                                    resampling=resampling,
                                    ess_threshold=ess_threshold,
                                    n_threads=n_threads)
            return state.ll

        return numpy_ll

    if not _kernel_eligible(model, ess_threshold, n_threads, resampling):
        raise ParamError("model is not expressible in the compiled engine")
    from . import accel

    family = model.observation_family
    if family == POISSON:
        bad = (~np.isfinite(values)) | (values < 0) | (values != np.floor(values))
        if np.any(bad):
            from .errors import ObservationError

            raise ObservationError("count observations must be nonnegative integers")
        obs_const = gammaln(values + 1.0)
        obs_kind = 1
    else:
        obs_const = np.zeros_like(values)
        obs_kind = 0
    f_matrix = np.stack([model.transform_vector(t) for t in times]) \
        if times.shape[0] else np.zeros((0, model.dim))
    unique_dts, dt_idx = np.unique(gaps, return_inverse=True) \
        if times.shape[0] else (np.zeros(0), np.zeros(0, dtype=int))
    resample_kind = RESAMPLING_SCHEMES.index(resampling)

    def kernel_ll(params: ParamTree, rng: np.random.Generator) -> float:
        validate_shape(model, params)
        leaves = _param_list(params)
        mean = np.concatenate([p.init.mean for p in leaves])
        sd = np.concatenate([p.init.sd for p in leaves])
        coef_a = np.empty((unique_dts.shape[0], model.dim))
        coef_b = np.empty_like(coef_a)
        coef_s = np.empty_like(coef_a)
        for u, dt in enumerate(unique_dts):
            col = 0
            for p in leaves:
                a, b, s = transition_coefficients(p.sde, float(dt))
                d = p.dim
                coef_a[u, col:col + d] = a
                coef_b[u, col:col + d] = b
                coef_s[u, col:col + d] = s
                col += d
        if obs_kind == 0:
            v = leaves[0].scale
            c0 = 0.5 * math.log(2.0 * math.pi * v)
            inv2v = 1.0 / (2.0 * v)
        else:
            c0 = 0.0
            inv2v = 0.0
        return accel.filter_log_likelihood(
            rng, n_particles, mean, sd, coef_a, coef_b, coef_s,
            dt_idx.astype(np.int64), f_matrix, values, obs_const,
            obs_kind, c0, inv2v, resample_kind)

    if not obs:
        return lambda params, rng: 0.0
    return kernel_ll
