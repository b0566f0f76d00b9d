"""State and parameter trees.

Latent states are binary trees whose leaves hold real vectors; composing
two models joins their states under a new root.  Parameter trees mirror
the same shape, so every structural operation (flattening, validation,
zipping) walks both trees in lockstep.  All node types are immutable
after construction; operations return new trees.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import ParamError, ShapeMismatchError


def _as_vector(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ParamError(f"{what} must be a 1-D real vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParamError(f"{what} must be finite")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Leaf:
    """A leaf state: one real vector."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_vector(self.values, "leaf state"))


@dataclass(frozen=True)
class Branch:
    """An internal state node joining two subtrees."""

    left: "StateTree"
    right: "StateTree"


StateTree = Union[Leaf, Branch]


def branch(left: StateTree, right: StateTree) -> Branch:
    """Join two state trees under a new root."""
    return Branch(left, right)


def state_leaves(tree: StateTree) -> list[Leaf]:
    """Leaves of a state tree in left-to-right order."""
    if isinstance(tree, Leaf):
        return [tree]
    return state_leaves(tree.left) + state_leaves(tree.right)


def state_dim(tree: StateTree) -> int:
    """Total number of real coordinates in the tree."""
    return sum(leaf.values.shape[0] for leaf in state_leaves(tree))


def flatten_state(tree: StateTree) -> np.ndarray:
    """Concatenate all leaf vectors in left-to-right order."""
    parts = [leaf.values for leaf in state_leaves(tree)]
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def unflatten_state(template: StateTree, values: np.ndarray) -> StateTree:
    """Rebuild a tree shaped like ``template`` from a flat vector."""
    values = np.asarray(values, dtype=float)
    if values.shape != (state_dim(template),):
        raise ShapeMismatchError(
            "root", f"flat vector of length {values.shape} does not match tree "
            f"dimension {state_dim(template)}")

    def build(node: StateTree, offset: int) -> tuple[StateTree, int]:
        if isinstance(node, Leaf):
            d = node.values.shape[0]
            return Leaf(values[offset:offset + d]), offset + d
        left, offset = build(node.left, offset)
        right, offset = build(node.right, offset)
        return Branch(left, right), offset

    tree, _ = build(template, 0)
    return tree


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialStateParams:
    """Diagonal-Gaussian initial state distribution for one leaf."""

    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_vector(self.mean, "initial mean"))
        object.__setattr__(self, "sd", _as_vector(self.sd, "initial sd"))
        if self.mean.shape != self.sd.shape:
            raise ParamError("initial mean and sd must have equal length")
        if np.any(self.sd < 0):
            raise ParamError("initial sd must be nonnegative")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class BrownianParams:
    """Brownian motion with per-coordinate drift and diffusion."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", _as_vector(self.mu, "drift mu"))
        object.__setattr__(self, "sigma", _as_vector(self.sigma, "diffusion sigma"))
        if self.mu.shape != self.sigma.shape:
            raise ParamError("mu and sigma must have equal length")
        if np.any(self.sigma < 0):
            raise ParamError("diffusion sigma must be nonnegative")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class OrnsteinUhlenbeckParams:
    """Mean-reverting process with per-coordinate rate, level and diffusion."""

    alpha: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", _as_vector(self.alpha, "reversion alpha"))
        object.__setattr__(self, "theta", _as_vector(self.theta, "level theta"))
        object.__setattr__(self, "sigma", _as_vector(self.sigma, "diffusion sigma"))
        if not (self.alpha.shape == self.theta.shape == self.sigma.shape):
            raise ParamError("alpha, theta and sigma must have equal length")
        if np.any(self.alpha <= 0):
            raise ParamError("reversion alpha must be positive")
        if np.any(self.sigma < 0):
            raise ParamError("diffusion sigma must be nonnegative")

    @property
    def dim(self) -> int:
        return self.alpha.shape[0]


@dataclass(frozen=True)
class EulerMaruyamaParams:
    """Generic diffusion stepped with fixed-count Euler substeps.

    ``drift`` and ``diffusion`` map an ``(n, d)`` array of states to an
    array broadcastable to ``(n, d)``; the diffusion matrix is diagonal.
    ``dim`` must be given explicitly because the callables carry no shape.
    """

    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    dim: int
    substeps: int = 10

    def __post_init__(self):
        if self.dim < 1:
            raise ParamError("dimension must be at least 1")
        if self.substeps < 1:
            raise ParamError("substep count must be at least 1")


SdeParams = Union[BrownianParams, OrnsteinUhlenbeckParams, EulerMaruyamaParams]


@dataclass(frozen=True)
class LeafParams:
    """Everything one leaf model needs: initial law, dynamics, and the
    observation scale when the paired observation family has one."""

    init: InitialStateParams
    sde: SdeParams
    scale: float | None = None

    def __post_init__(self):
        if self.init.dim != self.sde.dim:
            raise ParamError(
                f"initial distribution is {self.init.dim}-dimensional but the "
                f"transition kernel is {self.sde.dim}-dimensional")
        if self.scale is not None:
            if not np.isfinite(self.scale) or self.scale <= 0:
                raise ParamError("observation scale must be positive")

    @property
    def dim(self) -> int:
        return self.init.dim


@dataclass(frozen=True)
class BranchParams:
    """Parameters for a composed model: one subtree per component."""

    left: "ParamTree"
    right: "ParamTree"


ParamTree = Union[LeafParams, BranchParams]


def combine_params(left: ParamTree, right: ParamTree) -> BranchParams:
    """Join two parameter trees under a new root."""
    return BranchParams(left, right)


def param_leaves(tree: ParamTree) -> list[LeafParams]:
    """Leaves of a parameter tree in left-to-right order."""
    if isinstance(tree, LeafParams):
        return [tree]
    return param_leaves(tree.left) + param_leaves(tree.right)


def zip_trees(state: StateTree, params: ParamTree, path: str = "root"):
    """Pair state and parameter leaves, checking the shapes agree."""
    if isinstance(state, Leaf) != isinstance(params, LeafParams):
        raise ShapeMismatchError(path, "state and parameter trees differ in shape")
    if isinstance(state, Leaf):
        if state.values.shape[0] != params.dim:
            raise ShapeMismatchError(
                path, f"state leaf has dimension {state.values.shape[0]} but "
                f"parameters expect {params.dim}")
        return [(state, params, path)]
    return (zip_trees(state.left, params.left, path + ".left")
            + zip_trees(state.right, params.right, path + ".right"))


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimedObservation:
    """One observation: a timestamp and a value.

    Event streams carry only times; their value field is NaN.
    """

    time: float
    value: float = field(default=float("nan"))
