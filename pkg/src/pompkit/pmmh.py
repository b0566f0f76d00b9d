"""Particle marginal Metropolis-Hastings over parameter trees.

Each iteration proposes new parameters with a random walk (log-scale for
positive-constrained coordinates), runs a fresh particle filter for the
proposed parameters, and accepts on the usual Metropolis ratio applied to
the estimated marginal log-likelihood plus log-prior.  The estimate stored
in the chain state is reused verbatim on rejection; it is never
recomputed, which is what keeps the sampler exact despite the noisy
likelihood.  The initial state carries an absurdly low likelihood so the
first iteration always accepts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np

from .errors import ParamError, PompError
from .filtering import prepared_log_likelihood
from .models import Model, validate_shape
from .trees import (BranchParams, BrownianParams, InitialStateParams,
                    LeafParams, OrnsteinUhlenbeckParams, ParamTree)

VERY_SMALL_LL = -1e99


@dataclass(frozen=True)
class MetropState:
    """One chain state: parameters, their stored log-likelihood estimate,
    whether this iteration's proposal was accepted, and the iteration
    index (0 for the initial state)."""

    params: ParamTree
    ll: float
    accepted: bool
    iteration: int


# ---------------------------------------------------------------------------
# Canonical flattening
# ---------------------------------------------------------------------------

def _leaf_entries(leaf: LeafParams, k: int):
    """(name, value, positive, setter-path) per proposable coordinate."""
    entries = []
    for i, v in enumerate(leaf.init.mean):
        entries.append((f"leaf{k}.mean{i}", float(v), False))
    for i, v in enumerate(leaf.init.sd):
        entries.append((f"leaf{k}.sd{i}", float(v), True))
    if leaf.scale is not None:
        entries.append((f"leaf{k}.scale", float(leaf.scale), True))
    sde = leaf.sde
    if isinstance(sde, BrownianParams):
        for i, v in enumerate(sde.mu):
            entries.append((f"leaf{k}.mu{i}", float(v), False))
        for i, v in enumerate(sde.sigma):
            entries.append((f"leaf{k}.sigma{i}", float(v), True))
    elif isinstance(sde, OrnsteinUhlenbeckParams):
        for i, v in enumerate(sde.alpha):
            entries.append((f"leaf{k}.alpha{i}", float(v), True))
        for i, v in enumerate(sde.theta):
            entries.append((f"leaf{k}.theta{i}", float(v), False))
        for i, v in enumerate(sde.sigma):
            entries.append((f"leaf{k}.sigma{i}", float(v), True))
    # Euler-Maruyama dynamics hide their parameters inside callables, so
    # they contribute nothing proposable.
    return entries


def _walk_leaves(params: ParamTree) -> list[LeafParams]:
    if isinstance(params, LeafParams):
        return [params]
    return _walk_leaves(params.left) + _walk_leaves(params.right)


def flatten_params(params: ParamTree):
    """Canonical vector view: ``(values, names, positive mask)``.

    Coordinates are ordered leaf by leaf (left-to-right), within a leaf as
    initial mean, initial sd, observation scale, then the transition
    kernel's own parameters.
    """
    names: list[str] = []
    values: list[float] = []
    positive: list[bool] = []
    for k, leaf in enumerate(_walk_leaves(params)):
        for name, value, pos in _leaf_entries(leaf, k):
            names.append(name)
            values.append(value)
            positive.append(pos)
    return np.array(values), names, np.array(positive, dtype=bool)


def param_names(params: ParamTree) -> list[str]:
    """Canonical coordinate names for a parameter tree."""
    return flatten_params(params)[1]


def unflatten_params(template: ParamTree, values: np.ndarray) -> ParamTree:
    """Rebuild a tree shaped like ``template`` from a canonical vector."""
    values = np.asarray(values, dtype=float)
    pos = 0

    def take(n: int) -> np.ndarray:
        nonlocal pos
        out = values[pos:pos + n]
        pos += n
        return out

    def rebuild(node: ParamTree) -> ParamTree:
        if isinstance(node, BranchParams):
            left = rebuild(node.left)
            right = rebuild(node.right)
            return BranchParams(left, right)
        d = node.dim
        init = InitialStateParams(mean=take(d), sd=take(d))
        scale = float(take(1)[0]) if node.scale is not None else None
        sde = node.sde
        if isinstance(sde, BrownianParams):
            sde = BrownianParams(mu=take(d), sigma=take(d))
        elif isinstance(sde, OrnsteinUhlenbeckParams):
            sde = OrnsteinUhlenbeckParams(alpha=take(d), theta=take(d), sigma=take(d))
        return LeafParams(init=init, sde=sde, scale=scale)

    out = rebuild(template)
    if pos != values.shape[0]:
        raise ParamError(
            f"parameter vector has {values.shape[0]} entries, tree takes {pos}")
    return out


# ---------------------------------------------------------------------------
# Proposals and priors
# ---------------------------------------------------------------------------

class RandomWalkProposal:
    """Gaussian random walk on the canonical parameter vector.

    ``step_sizes`` maps canonical names to walk scales; unnamed
    coordinates stay fixed.  Positive-constrained coordinates are walked
    on the log scale, so they stay positive for free.  The proposal is
    treated as symmetric by default; ``exact_jacobian=True`` adds the
    log-scale Hastings correction to the acceptance ratio instead.
    """

    def __init__(self, step_sizes: Mapping[str, float] | float,
                 exact_jacobian: bool = False):
        self.step_sizes = step_sizes
        self.exact_jacobian = exact_jacobian

    def _steps_for(self, names: list[str]) -> np.ndarray:
        if isinstance(self.step_sizes, Mapping):
            unknown = set(self.step_sizes) - set(names)
            if unknown:
                raise ParamError(f"unknown parameter names in step sizes: "
                                 f"{sorted(unknown)}")
            return np.array([float(self.step_sizes.get(n, 0.0)) for n in names])
        return np.full(len(names), float(self.step_sizes))

    def __call__(self, params: ParamTree, rng: np.random.Generator):
        values, names, positive = flatten_params(params)
        steps = self._steps_for(names)
        if np.any(steps < 0):
            raise ParamError("step sizes must be nonnegative")
        # One draw per coordinate regardless of step size, so the random
        # stream does not depend on which coordinates are free.
        eps = rng.standard_normal(values.shape[0])
        out = values.copy()
        correction = 0.0
        for i in range(values.shape[0]):
            if steps[i] == 0.0:
                continue
            if positive[i]:
                if values[i] <= 0.0:
                    continue
                out[i] = math.exp(math.log(values[i]) + steps[i] * eps[i])
                if self.exact_jacobian:
                    correction += math.log(out[i]) - math.log(values[i])
            else:
                out[i] = values[i] + steps[i] * eps[i]
        return unflatten_params(params, out), correction


def propose_random_walk(params: ParamTree,
                        step_sizes: Mapping[str, float] | float,
                        rng: np.random.Generator) -> ParamTree:
    """One symmetric random-walk proposal (see :class:`RandomWalkProposal`)."""
    proposed, _ = RandomWalkProposal(step_sizes)(params, rng)
    return proposed


class FlatPrior:
    """Improper uniform prior: contributes nothing to the ratio."""

    def __call__(self, params: ParamTree) -> float:
        return 0.0


class IndependentPrior:
    """Independent priors by canonical name.

    Each named coordinate gets ``(loc, scale)``: a Gaussian for
    unconstrained coordinates, a log-Gaussian (Gaussian on the log, with
    the change-of-variables term) for positive-constrained ones.  Unnamed
    coordinates are flat.
    """

    def __init__(self, spec: Mapping[str, tuple[float, float]]):
        for name, (_, scale) in spec.items():
            if scale <= 0:
                raise ParamError(f"prior scale for {name} must be positive")
        self.spec = dict(spec)

    def __call__(self, params: ParamTree) -> float:
        values, names, positive = flatten_params(params)
        lookup = dict(zip(names, zip(values, positive)))
        unknown = set(self.spec) - set(names)
        if unknown:
            raise ParamError(f"unknown parameter names in prior: {sorted(unknown)}")
        total = 0.0
        for name, (loc, scale) in self.spec.items():
            value, pos = lookup[name]
            if pos:
                if value <= 0.0:
                    return -math.inf
                z = (math.log(value) - loc) / scale
                total += (-0.5 * z * z - math.log(scale)
                          - 0.5 * math.log(2.0 * math.pi) - math.log(value))
            else:
                z = (value - loc) / scale
                total += -0.5 * z * z - math.log(scale) - 0.5 * math.log(2.0 * math.pi)
        return total


# ---------------------------------------------------------------------------
# The sampler
# ---------------------------------------------------------------------------

def pmmh_step(state: MetropState,
              loglik: Callable[[ParamTree], float],
              log_prior: Callable[[ParamTree], float],
              proposal, rng: np.random.Generator) -> MetropState:
    """One Metropolis-Hastings iteration with a pseudo-marginal likelihood.

    ``loglik`` is called exactly once, on the proposed parameters; filter
    failures (all weights zero and friends) score the proposal at minus
    infinity rather than aborting the chain.
    """
    result = proposal(state.params, rng)
    proposed, correction = result if isinstance(result, tuple) else (result, 0.0)
    lp_new = log_prior(proposed)
    try:
        ll_new = loglik(proposed)
    except (PompError, FloatingPointError):
        ll_new = -math.inf
    lp_old = log_prior(state.params)
    ratio = (ll_new + lp_new + correction) - (state.ll + lp_old)
    u = rng.random()
    log_u = math.log(u) if u > 0.0 else -math.inf
    accept = (not math.isnan(ratio)) and log_u < ratio
    if accept:
        return MetropState(params=proposed, ll=ll_new, accepted=True,
                           iteration=state.iteration + 1)
    return MetropState(params=state.params, ll=state.ll, accepted=False,
                       iteration=state.iteration + 1)


@dataclass(frozen=True)
class PmmhConfig:
    """Chain settings.

    ``step_sizes`` maps canonical parameter names to random-walk scales
    (anything unnamed stays fixed); ``prior`` is any callable on parameter
    trees, defaulting to flat.  ``iterations`` counts proposals; the chain
    yields states after ``burn_in``, every ``thin``-th iteration.
    """

    iterations: int
    step_sizes: Mapping[str, float] | float
    burn_in: int = 0
    thin: int = 1
    n_particles: int = 200
    seed: int | None = None
    resampling: str = "multinomial"
    engine: str = "auto"
    t_start: float = 0.0
    prior: Callable[[ParamTree], float] | None = None
    exact_jacobian: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ParamError("iteration count must be at least 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ParamError("burn-in must be shorter than the chain")
        if self.thin < 1:
            raise ParamError("thinning interval must be at least 1")
        if self.n_particles < 1:
            raise ParamError("particle count must be at least 1")


def pmmh_chain(model: Model, data, init_params: ParamTree,
               config: PmmhConfig,
               rng: np.random.Generator | None = None,
               ) -> Iterator[MetropState]:
    """Run one chain lazily, yielding post-burn-in, thinned states.

    All randomness (proposals, the filters inside the likelihood, accept
    draws) comes from a single generator seeded by ``config.seed``, so a
    fixed seed fixes the chain exactly.
    """
    validate_shape(model, init_params)
    data = list(data)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    ll_fn = prepared_log_likelihood(model, data, config.n_particles,
                                    t_start=config.t_start,
                                    resampling=config.resampling,
                                    engine=config.engine)
    proposal = RandomWalkProposal(config.step_sizes,
                                  exact_jacobian=config.exact_jacobian)
    log_prior = config.prior if config.prior is not None else FlatPrior()

    def run() -> Iterator[MetropState]:
        state = MetropState(params=init_params, ll=VERY_SMALL_LL,
                            accepted=False, iteration=0)
        for it in range(1, config.iterations + 1):
            state = pmmh_step(state, lambda p: ll_fn(p, rng), log_prior,
                              proposal, rng)
            if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
                yield state

    return run()


def acceptance_rate(states: Iterable[MetropState]) -> float:
    """Fraction of accepted iterations in a sequence of chain states."""
    flags = [s.accepted for s in states]
    if not flags:
        raise ParamError("empty chain")
    return float(np.mean(flags))


def batch_means_se(samples, n_batches: int = 32) -> float:
    """Batch-means standard error of a correlated chain's mean."""
    x = np.asarray(list(samples), dtype=float)
    if x.shape[0] < 2 * n_batches:
        raise ParamError("too few samples for the requested batch count")
    usable = (x.shape[0] // n_batches) * n_batches
    batches = x[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(np.std(batches, ddof=1) / math.sqrt(n_batches))


def posterior_mean(states: Iterable[MetropState],
                   template: ParamTree | None = None) -> ParamTree:
    """Coordinate-wise mean of the sampled parameter vectors, as a tree."""
    vectors = []
    for s in states:
        if template is None:
            template = s.params
        vectors.append(flatten_params(s.params)[0])
    if not vectors:
        raise ParamError("empty chain")
    return unflatten_params(template, np.mean(vectors, axis=0))
