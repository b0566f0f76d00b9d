"""Composable state-space models with particle filtering and
pseudo-marginal Metropolis inference over continuous-time latent states.

The pieces: leaf models pair an observation distribution with a latent
diffusion (:mod:`pompkit.models`), ``compose`` glues them into products
whose linear signals add (:mod:`pompkit.compose`), the filter folds
timed observations into likelihoods and credible bands
(:mod:`pompkit.filtering`), and :mod:`pompkit.pmmh` wraps that likelihood
in a random-walk Metropolis chain.  :mod:`pompkit.simulate` draws
synthetic data, including event streams by thinning, and
:mod:`pompkit.kalman` holds the closed-form references the tests and the
``verify`` command check against.
"""

from .compose import compose, compose_all, concat_transform, identity_model
from .errors import (AllWeightsZeroError, ConfigError, DataError,
                     NonmonotoneTimeError, ObservationError, ParamError,
                     PompError, ShapeMismatchError, UnusableIdentityError,
                     WeightSumError)
from .filtering import (FilterState, FilterSummary, effective_sample_size,
                        filter_scan, filter_step, init_filter,
                        lgcp_filter_step, path_log_likelihood,
                        prepared_log_likelihood, resample_multinomial,
                        resample_stratified, resample_systematic)
from .kalman import conjugate_posterior, kalman_log_likelihood
from .models import (Model, bernoulli_model, event_log_density, fourier_vector,
                     gaussian_model, lgcp_model, phase_amplitude,
                     poisson_model, seasonal_model, validate_shape)
from .pmmh import (FlatPrior, IndependentPrior, MetropState, PmmhConfig,
                   RandomWalkProposal, acceptance_rate, batch_means_se,
                   flatten_params, param_names, pmmh_chain, pmmh_step,
                   posterior_mean, propose_random_walk, unflatten_params)
from .simulate import (LgcpResult, SimulationResult, simulate_at_times,
                       simulate_lgcp)
from .trees import (Branch, BranchParams, BrownianParams, EulerMaruyamaParams,
                    InitialStateParams, Leaf, LeafParams,
                    OrnsteinUhlenbeckParams, TimedObservation, branch,
                    combine_params, flatten_state, state_dim, state_leaves,
                    unflatten_state)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
