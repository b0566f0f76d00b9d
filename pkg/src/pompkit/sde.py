"""Transition kernels for the latent diffusions.

Brownian motion and the mean-reverting (Ornstein-Uhlenbeck) process have
exact Gaussian transition densities over any gap, so advancing a particle
by ``dt`` is one affine-Gaussian update

    x'  =  A(dt) * x + b(dt) + s(dt) * eps,     eps ~ N(0, I)

with per-coordinate coefficients.  Other diffusions fall back to
Euler-Maruyama substepping.  A gap of zero is the identity for every
kernel.

Randomness discipline: every stepper consumes standard normals from a
per-particle draw block laid out row-major as ``(n_particles, draws per
particle)``.  Closed-form kernels use one draw per coordinate; Euler
substepping uses one per coordinate per substep, substep-major.  Both
filter engines and the simulator allocate draws through this layout, which
is what makes their streams line up.
"""
from __future__ import annotations

import numpy as np

from .errors import NonmonotoneTimeError
from .trees import (BrownianParams, EulerMaruyamaParams, Leaf,
                    OrnsteinUhlenbeckParams, SdeParams)


def draws_per_particle(sde: SdeParams) -> int:
    """Number of standard normals one particle consumes in a single step."""
    if isinstance(sde, EulerMaruyamaParams):
        return sde.dim * sde.substeps
    return sde.dim


def transition_coefficients(sde: SdeParams, dt: float):
    """Exact affine-Gaussian coefficients ``(A, b, s)`` for one gap.

    Only closed-form kernels have these; Euler-Maruyama raises TypeError.
    """
    if dt < 0:
        raise NonmonotoneTimeError(f"negative time gap {dt}")
    if isinstance(sde, BrownianParams):
        ones = np.ones(sde.dim)
        return ones, sde.mu * dt, sde.sigma * np.sqrt(dt)
    if isinstance(sde, OrnsteinUhlenbeckParams):
        decay = np.exp(-sde.alpha * dt)
        var = sde.sigma ** 2 * (1.0 - np.exp(-2.0 * sde.alpha * dt)) / (2.0 * sde.alpha)
        return decay, sde.theta * (1.0 - decay), np.sqrt(var)
    raise TypeError(f"{type(sde).__name__} has no closed-form transition")


def step_values(values: np.ndarray, sde: SdeParams, dt: float,
                eps: np.ndarray) -> np.ndarray:
    """Advance an ``(n, d)`` block of states by ``dt``.

    ``eps`` is the draw block for these particles, shaped
    ``(n, draws_per_particle(sde))``.
    """
    if dt < 0:
        raise NonmonotoneTimeError(f"negative time gap {dt}")
    if isinstance(sde, EulerMaruyamaParams):
        return _step_euler(values, sde, dt, eps)
    a, b, s = transition_coefficients(sde, dt)
    return a * values + b + s * eps


def _step_euler(values: np.ndarray, sde: EulerMaruyamaParams, dt: float,
                eps: np.ndarray) -> np.ndarray:
    d = sde.dim
    delta = dt / sde.substeps
    sqrt_delta = np.sqrt(delta)
    x = np.array(values, dtype=float)
    for j in range(sde.substeps):
        e = eps[:, j * d:(j + 1) * d]
        x = x + sde.drift(x) * delta + sde.diffusion(x) * sqrt_delta * e
    return x


def _step_leaf(leaf: Leaf, sde: SdeParams, dt: float,
               rng: np.random.Generator) -> Leaf:
    if leaf.values.shape[0] != sde.dim:
        from .errors import ShapeMismatchError

        raise ShapeMismatchError(
            "root", f"leaf has dimension {leaf.values.shape[0]} but the kernel "
            f"expects {sde.dim}")
    eps = rng.standard_normal((1, draws_per_particle(sde)))
    return Leaf(step_values(leaf.values[None, :], sde, dt, eps)[0])


def step_brownian(state: Leaf, params: BrownianParams, dt: float,
                  rng: np.random.Generator) -> Leaf:
    """Exact Brownian transition: ``x' ~ N(x + mu*dt, sigma^2*dt)``."""
    return _step_leaf(state, params, dt, rng)


def step_ou(state: Leaf, params: OrnsteinUhlenbeckParams, dt: float,
            rng: np.random.Generator) -> Leaf:
    """Exact mean-reverting transition over an arbitrary gap."""
    return _step_leaf(state, params, dt, rng)


def step_euler_maruyama(state: Leaf, params: EulerMaruyamaParams, dt: float,
                        rng: np.random.Generator) -> Leaf:
    """Euler-Maruyama substepping for diffusions without a closed form."""
    return _step_leaf(state, params, dt, rng)
