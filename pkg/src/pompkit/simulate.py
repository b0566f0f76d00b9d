"""Forward simulation: sampled observations at given times, and event
streams for log-Gaussian Cox models via thinning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonmonotoneTimeError, ObservationError, ParamError
from .models import LGCP, Model, validate_shape
from .trees import ParamTree, TimedObservation


@dataclass(frozen=True)
class SimulationResult:
    """Observations with the latent path that produced them.

    ``states`` holds the flattened latent state at each observation time,
    one row per time; ``etas`` the linked signal the observation was drawn
    from.
    """

    observations: list[TimedObservation]
    states: np.ndarray
    etas: np.ndarray


def simulate_at_times(model: Model, times, rng: np.random.Generator,
                      params: ParamTree | None = None,
                      t_start: float | None = None) -> SimulationResult:
    """Draw one latent path and one observation at each requested time.

    Times must be nondecreasing.  With ``t_start`` given, the initial
    state is drawn there and advanced to the first time; otherwise the
    initial state sits at the first time directly.
    """
    tree = model.params if params is None else params
    validate_shape(model, tree)
    if model.observation_family == LGCP:
        raise ObservationError(
            "event-stream models are simulated with simulate_lgcp")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise ParamError("times must be a 1-D sequence")
    n = times.shape[0]
    if n == 0:
        return SimulationResult([], np.zeros((0, model.dim)), np.zeros(0))
    if np.any(np.diff(times) < 0):
        raise NonmonotoneTimeError("times must be nondecreasing")

    x = model.initial_draw_matrix(1, rng, tree)
    width = model.draw_block_width(tree)
    if t_start is None:
        t = float(times[0])
    else:
        t = float(t_start)
        if t > times[0]:
            raise NonmonotoneTimeError("t_start is past the first time")

    observations: list[TimedObservation] = []
    states = np.empty((n, model.dim))
    etas = np.empty(n)
    for i in range(n):
        ti = float(times[i])
        dt = ti - t
        if dt > 0.0 or (i == 0 and t_start is not None):
            eps = rng.standard_normal((1, width))
            x = model.step_matrix(x, dt, eps, tree)
            t = ti
        gamma = float(x[0] @ model.transform_vector(ti))
        eta = model.link(gamma)
        y = model.observation_draw(eta, rng, tree)
        observations.append(TimedObservation(time=ti, value=y))
        states[i] = x[0]
        etas[i] = eta
    return SimulationResult(observations, states, etas)


@dataclass(frozen=True)
class LgcpResult:
    """Event times plus the grid path and thinning audit counters."""

    event_times: np.ndarray
    grid_times: np.ndarray
    grid_hazard: np.ndarray
    n_proposals: int
    n_accepted: int
    envelope: float


def simulate_lgcp(model: Model, t_end: float, rng: np.random.Generator,
                  params: ParamTree | None = None, t_start: float = 0.0,
                  grid_dt: float | None = None) -> LgcpResult:
    """Simulate an event stream by thinning.

    The latent path is realised on a regular grid and the hazard treated
    as piecewise constant (left value) between grid points, matching how
    the filter integrates it.  Candidate events arrive as a homogeneous
    Poisson stream at the realised path's peak hazard and are kept with
    probability hazard/peak.
    """
    tree = model.params if params is None else params
    validate_shape(model, tree)
    if model.observation_family != LGCP:
        raise ObservationError("simulate_lgcp needs an event-stream model")
    span = float(t_end) - float(t_start)
    if span < 0:
        raise NonmonotoneTimeError("t_end is before t_start")
    if grid_dt is None:
        grid_dt = span / 1e4 if span > 0 else 1.0
    if grid_dt <= 0:
        raise ParamError("grid_dt must be positive")

    n_cells = max(int(np.ceil(span / grid_dt)), 1) if span > 0 else 0
    grid_times = t_start + np.arange(n_cells + 1) * (span / n_cells if n_cells else 1.0)
    if n_cells:
        grid_times[-1] = t_end

    x = model.initial_draw_matrix(1, rng, tree)
    width = model.draw_block_width(tree)
    f = model.transform_vector(t_start)
    path = np.empty((n_cells + 1, model.dim))
    path[0] = x[0]
    for j in range(n_cells):
        eps = rng.standard_normal((1, width))
        x = model.step_matrix(x, float(grid_times[j + 1] - grid_times[j]), eps, tree)
        path[j + 1] = x[0]
    grid_hazard = model.link_batch(path @ f)

    if span == 0 or not np.any(grid_hazard[:-1] > 0):
        return LgcpResult(np.zeros(0), grid_times, grid_hazard, 0, 0,
                          float(grid_hazard.max(initial=0.0)))
    # Left-value envelope: the hazard used between grid points is the left
    # grid value, so its maximum over left values dominates exactly.
    envelope = float(np.max(grid_hazard[:-1]))

    events = []
    n_proposals = 0
    n_accepted = 0
    t = float(t_start)
    while True:
        t += rng.exponential(1.0 / envelope)
        if t >= t_end:
            break
        n_proposals += 1
        cell = min(int((t - t_start) / span * n_cells), n_cells - 1)
        if rng.random() * envelope <= grid_hazard[cell]:
            events.append(t)
            n_accepted += 1
    return LgcpResult(np.asarray(events), grid_times, grid_hazard,
                      n_proposals, n_accepted, envelope)
