"""Composition of observation models.

``compose(m1, m2)`` builds a model whose latent state is the pair of the
component states, whose linear transform is the sum of the component
transforms (equivalently, the concatenation of their transform vectors
applied to the concatenated state), and whose observation distribution
and link come from the left component.  The two latent processes evolve
independently.

Composition is associative up to the shape of the state tree, and the
dimensionless identity model is a two-sided unit: composing with it
returns the other model unchanged rather than wrapping it, so repeated
units never grow the tree.
"""
from __future__ import annotations

from functools import reduce
from typing import Callable

import numpy as np

from .models import COMPOSITE, IDENTITY, Model
from .trees import (Branch, BrownianParams, InitialStateParams, LeafParams,
                    StateTree, combine_params)


def identity_model() -> Model:
    """The unit of composition: no state, no transform, no observations."""
    params = LeafParams(
        init=InitialStateParams(mean=np.zeros(0), sd=np.zeros(0)),
        sde=BrownianParams(mu=np.zeros(0), sigma=np.zeros(0)))
    return Model(kind=IDENTITY, dim=0, params=params)


def compose(left: Model, right: Model) -> Model:
    """Combine two models; the left one keeps the observation role."""
    if left.kind == IDENTITY:
        return right
    if right.kind == IDENTITY:
        return left
    return Model(kind=COMPOSITE,
                 dim=left.dim + right.dim,
                 params=combine_params(left.params, right.params),
                 left=left,
                 right=right)


def compose_all(first: Model, *rest: Model) -> Model:
    """Left-associated composition of several models."""
    return reduce(compose, rest, first)


def concat_transform(left_fn: Callable[[StateTree, float], float],
                     right_fn: Callable[[StateTree, float], float],
                     ) -> Callable[[StateTree, float], float]:
    """The transform a composition uses: components applied to their own
    subtree, contributions summed.  Exposed for testing transforms in
    isolation."""

    def combined(state: StateTree, t: float) -> float:
        if not isinstance(state, Branch):
            from .errors import ShapeMismatchError

            raise ShapeMismatchError("root", "combined transform needs a branched state")
        return left_fn(state.left, t) + right_fn(state.right, t)

    return combined
