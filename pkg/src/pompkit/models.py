"""Observation models over latent diffusion states.

A model bundles six capabilities: drawing an initial latent state,
stepping it over a time gap, mapping the state to a real-valued signal
through a time-varying linear transform, pushing that signal through a
link function, and drawing or scoring observations.  Models form leaves
(count, binary, measurement, seasonal, event-rate) and compose into
binary trees (see :mod:`pompkit.compose`); the left component always
supplies the observation distribution and link, while every component
contributes additively to the linear transform.

Parameters live in a separate tree mirroring the model structure, so the
same model can be re-scored under proposed parameters without rebuilding
it.  Every model carries the parameters it was constructed with as
defaults.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .errors import (ObservationError, ParamError, ShapeMismatchError,
                     UnusableIdentityError)
from .numerics import (LOG_RATE_MAX, LOG_RATE_MIN, PROB_EPS, RATE_MAX,
                       RATE_MIN, fastexp)
from .sde import draws_per_particle, step_values
from .trees import (Branch, BranchParams, InitialStateParams, Leaf,
                    LeafParams, ParamTree, SdeParams, StateTree,
                    combine_params, zip_trees)

POISSON = "poisson"
BERNOULLI = "bernoulli"
GAUSSIAN = "gaussian"
SEASONAL = "seasonal"
LGCP = "lgcp"
IDENTITY = "identity"
COMPOSITE = "composite"

# Observation families keyed by the leaf kind that owns them.  Seasonal
# leaves observe through the same Gaussian density as plain measurement
# leaves; event-rate leaves are scored by the event machinery instead.
_FAMILY = {
    POISSON: POISSON,
    BERNOULLI: BERNOULLI,
    GAUSSIAN: GAUSSIAN,
    SEASONAL: GAUSSIAN,
    LGCP: LGCP,
}

_NEEDS_SCALE = {GAUSSIAN, SEASONAL}


def fourier_vector(t: float, period: float, harmonics: int) -> np.ndarray:
    """Seasonal basis ``(cos wt, sin wt, ..., cos hwt, sin hwt)``, ``w = 2*pi/period``."""
    if period <= 0:
        raise ParamError("seasonal period must be positive")
    if harmonics < 1:
        raise ParamError("harmonic count must be at least 1")
    w = 2.0 * math.pi / period
    out = np.empty(2 * harmonics)
    for k in range(1, harmonics + 1):
        out[2 * k - 2] = math.cos(k * w * t)
        out[2 * k - 1] = math.sin(k * w * t)
    return out


def phase_amplitude(cos_coef: float, sin_coef: float) -> tuple[float, float]:
    """Convert one harmonic's state pair to ``(amplitude, phase)``.

    The pair ``(xc, xs)`` contributes ``A*cos(wt + phi)`` with
    ``A = hypot(xc, xs)`` and ``phi = atan2(-xs, xc)``.  A zero vector has
    amplitude 0 and no defined phase, flagged as NaN.
    """
    amplitude = math.hypot(cos_coef, sin_coef)
    if amplitude == 0.0:
        return 0.0, math.nan
    return amplitude, math.atan2(-sin_coef, cos_coef)


@dataclass(frozen=True)
class Model:
    """A leaf observation model or a composition of them.

    Use the module constructors (``poisson_model`` etc.) and
    :func:`pompkit.compose.compose` rather than building instances by
    hand.
    """

    kind: str
    dim: int
    params: ParamTree | None
    left: Optional["Model"] = None
    right: Optional["Model"] = None
    period: float | None = None
    harmonics: int | None = None

    # -- structure ---------------------------------------------------------

    def leaf_models(self) -> list["Model"]:
        if self.kind == COMPOSITE:
            return self.left.leaf_models() + self.right.leaf_models()
        return [self]

    def observation_leaf(self) -> "Model":
        """The leftmost leaf, which owns the observation distribution."""
        node = self
        while node.kind == COMPOSITE:
            node = node.left
        if node.kind == IDENTITY:
            raise UnusableIdentityError(
                "the identity model has no observation distribution")
        return node

    @property
    def observation_family(self) -> str:
        return _FAMILY[self.observation_leaf().kind]

    def with_params(self, params: ParamTree) -> "Model":
        """Rebind default parameters (the tree shape must match)."""
        validate_shape(self, params)
        return replace(self, params=params)

    def state_template(self) -> StateTree:
        if self.kind == COMPOSITE:
            return Branch(self.left.state_template(), self.right.state_template())
        return Leaf(np.zeros(self.dim))

    # -- linear transform ---------------------------------------------------

    def transform_vector(self, t: float) -> np.ndarray:
        """Row vector ``F_t`` with ``linear_transform(x, t) = F_t . flatten(x)``."""
        if self.kind == COMPOSITE:
            return np.concatenate([self.left.transform_vector(t),
                                   self.right.transform_vector(t)])
        if self.kind == SEASONAL:
            return fourier_vector(t, self.period, self.harmonics)
        if self.kind == IDENTITY:
            return np.zeros(0)
        return np.ones(1)

    def linear_transform(self, state: StateTree, t: float) -> float:
        """Signal ``gamma = F_t^T x``; linear in the state."""
        if self.kind == COMPOSITE:
            if not isinstance(state, Branch):
                raise ShapeMismatchError(
                    "root", "composed model needs a branched state")
            return (self.left.linear_transform(state.left, t)
                    + self.right.linear_transform(state.right, t))
        if not isinstance(state, Leaf):
            raise ShapeMismatchError("root", "leaf model needs a leaf state")
        if state.values.shape[0] != self.dim:
            raise ShapeMismatchError(
                "root", f"state has dimension {state.values.shape[0]}, "
                f"model expects {self.dim}")
        if self.kind == IDENTITY:
            return 0.0
        return float(self.transform_vector(t) @ state.values)

    # -- link and observation density ---------------------------------------

    def link(self, gamma: float) -> float:
        """Map the linear signal onto the observation distribution's scale."""
        return float(self.link_batch(np.asarray([gamma]))[0])

    def link_batch(self, gamma: np.ndarray) -> np.ndarray:
        family = self.observation_family
        if family in (POISSON, LGCP):
            return fastexp(np.clip(gamma, LOG_RATE_MIN, LOG_RATE_MAX))
        if family == BERNOULLI:
            p = 1.0 / (1.0 + fastexp(-gamma))
            return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
        return np.asarray(gamma, dtype=float)

    def _scale(self, params: ParamTree | None) -> float:
        tree = self.params if params is None else params
        leaf = tree
        while isinstance(leaf, BranchParams):
            leaf = leaf.left
        if leaf.scale is None:
            raise ParamError(
                f"{self.observation_family} observations need a scale parameter")
        return leaf.scale

    def log_density(self, eta: float, y: float,
                    params: ParamTree | None = None) -> float:
        """Observation log-density at linked signal ``eta``."""
        return float(self.log_density_batch(np.asarray([eta]), y, params)[0])

    def log_density_batch(self, eta: np.ndarray, y: float,
                          params: ParamTree | None = None) -> np.ndarray:
        family = self.observation_family
        if family == POISSON:
            if not np.isfinite(y) or y < 0 or y != math.floor(y):
                raise ObservationError(
                    f"count observations must be nonnegative integers, got {y}")
            lam = np.clip(eta, RATE_MIN, RATE_MAX)
            return y * np.log(lam) - lam - gammaln(y + 1.0)
        if family == BERNOULLI:
            if y not in (0.0, 1.0):
                raise ObservationError(f"binary observations must be 0 or 1, got {y}")
            p = np.clip(eta, PROB_EPS, 1.0 - PROB_EPS)
            return np.log(p) if y == 1.0 else np.log1p(-p)
        if family == GAUSSIAN:
            if not np.isfinite(y):
                raise ObservationError(f"measurement observations must be finite, got {y}")
            v = self._scale(params)
            r = y - eta
            # A huge residual overflows r*r to inf; -inf density is the
            # right answer there, so silence the overflow warning.
            with np.errstate(over="ignore"):
                return -0.5 * math.log(2.0 * math.pi * v) - (r * r) / (2.0 * v)
        raise ObservationError(
            "event-rate models are scored per event interval; "
            "use lgcp_filter_step or event_log_density")

    def observation_draw(self, eta: float, rng: np.random.Generator,
                         params: ParamTree | None = None) -> float:
        """Draw one observation given the linked signal."""
        return float(self.observation_draw_batch(np.asarray([eta]), rng, params)[0])

    def observation_draw_batch(self, eta: np.ndarray, rng: np.random.Generator,
                               params: ParamTree | None = None) -> np.ndarray:
        family = self.observation_family
        if family == POISSON:
            return rng.poisson(np.clip(eta, RATE_MIN, RATE_MAX)).astype(float)
        if family == BERNOULLI:
            return (rng.random(eta.shape) < eta).astype(float)
        if family == GAUSSIAN:
            sd = math.sqrt(self._scale(params))
            return eta + sd * rng.standard_normal(eta.shape)
        raise ObservationError(
            "event-rate models generate whole event sequences; use simulate_lgcp")

    # -- state dynamics ------------------------------------------------------

    def draw_block_width(self, params: ParamTree | None = None) -> int:
        """Standard normals one particle consumes per step."""
        tree = self.params if params is None else params
        return sum(draws_per_particle(p.sde)
                   for p, m in zip(_param_list(tree), self.leaf_models())
                   if m.dim > 0)

    def initial_draw(self, rng: np.random.Generator,
                     params: ParamTree | None = None) -> StateTree:
        """One draw from the initial state distribution."""
        tree = self.params if params is None else params
        return self._initial_from_eps(
            tree, rng.standard_normal((1, self.dim)), 0)[0]

    def _initial_from_eps(self, params, eps, offset) -> tuple[StateTree, int]:
        if self.kind == COMPOSITE:
            left, offset = self.left._initial_from_eps(params.left, eps, offset)
            right, offset = self.right._initial_from_eps(params.right, eps, offset)
            return Branch(left, right), offset
        init = params.init
        values = init.mean + init.sd * eps[0, offset:offset + self.dim]
        return Leaf(values), offset + self.dim

    def initial_draw_matrix(self, n: int, rng: np.random.Generator,
                            params: ParamTree | None = None) -> np.ndarray:
        """Initial cloud as an ``(n, dim)`` matrix of flattened states."""
        tree = self.params if params is None else params
        mean = np.concatenate([p.init.mean for p in _param_list(tree)]) \
            if self.dim else np.zeros(0)
        sd = np.concatenate([p.init.sd for p in _param_list(tree)]) \
            if self.dim else np.zeros(0)
        return mean + sd * rng.standard_normal((n, self.dim))

    def step(self, state: StateTree, dt: float, rng: np.random.Generator,
             params: ParamTree | None = None) -> StateTree:
        """Advance one state tree by ``dt``."""
        tree = self.params if params is None else params
        zip_trees(state, tree)
        from .trees import flatten_state, unflatten_state

        x = flatten_state(state)[None, :]
        eps = rng.standard_normal((1, self.draw_block_width(tree)))
        out = self.step_matrix(x, dt, eps, tree)
        return unflatten_state(self.state_template(), out[0])

    def step_matrix(self, x: np.ndarray, dt: float, eps: np.ndarray,
                    params: ParamTree | None = None) -> np.ndarray:
        """Advance an ``(n, dim)`` cloud by ``dt`` using the draw block ``eps``.

        Leaves consume contiguous column ranges of ``eps`` in left-to-right
        order; this layout is the randomness contract shared with the
        compiled engine.
        """
        tree = self.params if params is None else params
        out = np.empty_like(x)
        col = 0
        ecol = 0
        for leaf, lp in zip(self.leaf_models(), _param_list(tree)):
            if leaf.dim == 0:
                continue
            d = leaf.dim
            k = draws_per_particle(lp.sde)
            out[:, col:col + d] = step_values(
                x[:, col:col + d], lp.sde, dt, eps[:, ecol:ecol + k])
            col += d
            ecol += k
        return out


def _param_list(tree: ParamTree) -> list[LeafParams]:
    if isinstance(tree, LeafParams):
        return [tree]
    return _param_list(tree.left) + _param_list(tree.right)


def validate_shape(model: Model, params: ParamTree, path: str = "root") -> None:
    """Check a parameter tree matches a model's structure and scale needs."""
    if model.kind == COMPOSITE:
        if not isinstance(params, BranchParams):
            raise ShapeMismatchError(path, "composed model needs branched parameters")
        validate_shape(model.left, params.left, path + ".left")
        validate_shape(model.right, params.right, path + ".right")
        return
    if not isinstance(params, LeafParams):
        raise ShapeMismatchError(path, "leaf model needs leaf parameters")
    if params.dim != model.dim:
        raise ShapeMismatchError(
            path, f"parameters are {params.dim}-dimensional but the model "
            f"state is {model.dim}-dimensional")
    needs_scale = model.kind in _NEEDS_SCALE
    if needs_scale and params.scale is None:
        raise ShapeMismatchError(path, f"{model.kind} model needs an observation scale")
    if not needs_scale and params.scale is not None:
        raise ShapeMismatchError(
            path, f"{model.kind} model does not take an observation scale")


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def _leaf_model(kind: str, sde: SdeParams, init: InitialStateParams,
                scale: float | None = None, dim: int | None = None,
                **extra) -> Model:
    params = LeafParams(init=init, sde=sde, scale=scale)
    expect = params.dim if dim is None else dim
    model = Model(kind=kind, dim=expect, params=params, **extra)
    validate_shape(model, params)
    return model


def poisson_model(sde: SdeParams, init: InitialStateParams) -> Model:
    """Counts with log-linked rate over a scalar latent state."""
    model = _leaf_model(POISSON, sde, init)
    if model.dim != 1:
        raise ParamError("count model takes a 1-D latent state")
    return model


def bernoulli_model(sde: SdeParams, init: InitialStateParams) -> Model:
    """Binary outcomes with logistic-linked probability."""
    model = _leaf_model(BERNOULLI, sde, init)
    if model.dim != 1:
        raise ParamError("binary model takes a 1-D latent state")
    return model


def gaussian_model(sde: SdeParams, init: InitialStateParams,
                   scale: float) -> Model:
    """Real measurements with identity link; ``scale`` is the noise variance."""
    model = _leaf_model(GAUSSIAN, sde, init, scale=scale)
    if model.dim != 1:
        raise ParamError("measurement model takes a 1-D latent state")
    return model


def seasonal_model(period: float, harmonics: int, scale: float,
                   sde: SdeParams, init: InitialStateParams) -> Model:
    """Gaussian observations of a harmonic signal with drifting coefficients.

    The state holds ``(cos, sin)`` coefficient pairs for each harmonic, so
    its dimension is twice ``harmonics``.
    """
    if period <= 0:
        raise ParamError("seasonal period must be positive")
    if harmonics < 1:
        raise ParamError("harmonic count must be at least 1")
    model = _leaf_model(SEASONAL, sde, init, scale=scale,
                        period=float(period), harmonics=int(harmonics))
    if model.dim != 2 * harmonics:
        raise ParamError(
            f"seasonal model with {harmonics} harmonics takes a "
            f"{2 * harmonics}-dimensional state")
    return model


def lgcp_model(sde: SdeParams, init: InitialStateParams) -> Model:
    """Event times driven by the log-linked hazard of a scalar latent state."""
    model = _leaf_model(LGCP, sde, init)
    if model.dim != 1:
        raise ParamError("event-rate model takes a 1-D latent state")
    return model


def event_log_density(hazard_at_event: float, hazard_integral: float) -> float:
    """Log-density of an event given the hazard since the previous event."""
    return math.log(max(hazard_at_event, RATE_MIN)) - hazard_integral
