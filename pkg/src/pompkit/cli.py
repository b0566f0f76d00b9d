"""Command-line front end.

Subcommands: ``simulate`` draws synthetic data from a configured model,
``filter`` streams a particle filter over a CSV (stdin capable), ``fit``
runs one or more Metropolis chains and writes them as CSV, ``forecast``
emits predictive means and bands, and ``verify`` reruns quick built-in
oracle checks.  Exit codes: 0 success, 2 config error, 3 data error,
4 numeric failure (including a failed ``verify``).
"""
from __future__ import annotations

import argparse
import contextlib
import math
import os
import sys

import numpy as np

from . import io as iolib
from .errors import (AllWeightsZeroError, ConfigError, DataError,
                     NonmonotoneTimeError, PompError, WeightSumError)
from .filtering import (RESAMPLING_SCHEMES, filter_scan, filter_step,
                        init_filter, path_log_likelihood)
from .kalman import conjugate_posterior, kalman_log_likelihood
from .models import LGCP, gaussian_model, poisson_model
from .numerics import weighted_quantile
from .pmmh import (MetropState, PmmhConfig, batch_means_se, flatten_params,
                   param_names, pmmh_chain, pmmh_step)
from .simulate import simulate_at_times, simulate_lgcp
from .trees import (BrownianParams, InitialStateParams, LeafParams,
                    TimedObservation)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


@contextlib.contextmanager
def _open_out(path: str):
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _load_model(args):
    """Config + optional parameter-file overrides -> (config, model, params)."""
    config = iolib.load_config(args.config)
    model = iolib.build_model(config)
    params = model.params
    if getattr(args, "params", None):
        overrides = iolib.read_params_csv(args.params)
        params = iolib.apply_param_overrides(params, overrides)
    return config, model, params


def _data_stream(args, config):
    unit = iolib.time_scale(config)
    epoch = iolib.config_epoch(config)
    if args.data == "-":
        return iolib.ingest_csv(sys.stdin, unit=unit, epoch=epoch)
    return iolib.ingest_csv(args.data, unit=unit, epoch=epoch)


def _band(coverage: float) -> tuple[float, float]:
    if not 0.0 < coverage < 1.0:
        raise ConfigError("--band must lie strictly between 0 and 1")
    half = (1.0 - coverage) / 2.0
    return half, 1.0 - half


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    config, model, params = _load_model(args)
    rng = np.random.default_rng(args.seed)
    if model.observation_family == LGCP:
        if args.horizon is None:
            raise ConfigError("event-stream simulation needs --horizon")
        result = simulate_lgcp(model, t_end=args.horizon, rng=rng,
                               params=params, grid_dt=args.grid_dt)
        with _open_out(args.out) as fh:
            fh.write("time\n")
            for t in result.event_times:
                fh.write(iolib.fmt(t) + "\n")
        if args.latent_out:
            with _open_out(args.latent_out) as fh:
                fh.write("time,hazard\n")
                for t, h in zip(result.grid_times, result.grid_hazard):
                    fh.write(iolib.fmt(t) + "," + iolib.fmt(h) + "\n")
        return EXIT_OK

    if args.times is not None:
        times = iolib.read_times_csv(args.times, unit=iolib.time_scale(config),
                                     epoch=iolib.config_epoch(config))
    elif args.horizon is not None:
        times = np.arange(0.0, args.horizon + 1e-12, args.every)
    else:
        raise ConfigError("simulate needs --times or --horizon")
    result = simulate_at_times(model, times, rng, params=params)
    with _open_out(args.out) as fh:
        iolib.write_observations_csv(fh, result.observations)
    if args.latent_out:
        with _open_out(args.latent_out) as fh:
            iolib.write_states_csv(fh, [o.time for o in result.observations],
                                   result.states)
    return EXIT_OK


# ---------------------------------------------------------------------------
# filter
# ---------------------------------------------------------------------------

def cmd_filter(args) -> int:
    config, model, params = _load_model(args)
    rng = np.random.default_rng(args.seed)
    scan = filter_scan(model, _data_stream(args, config), args.particles, rng,
                       params=params, t_start=args.t_start,
                       resampling=args.resampling,
                       ess_threshold=args.ess_threshold,
                       n_threads=args.threads, band=_band(args.band),
                       grid_dt=args.grid_dt)
    with _open_out(args.out) as fh:
        fh.write(iolib.FILTER_HEADER + "\n")
        fh.flush()
        for summary in scan:
            fh.write(iolib.filter_row(summary) + "\n")
            fh.flush()
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _fit_settings(args, config, params):
    section = config.get("fit", {}) or {}
    if not isinstance(section, dict):
        raise ConfigError("fit section must be a mapping")
    steps = dict(section.get("steps", {}) or {})
    for item in args.step or []:
        name, _, value = item.partition("=")
        if not _:
            raise ConfigError(f"--step wants name=value, got {item!r}")
        try:
            steps[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--step {item!r}: value is not a number") from None
    if not steps:
        raise ConfigError("fit needs step sizes (config fit.steps or --step)")
    prior = None
    prior_spec = section.get("prior")
    if prior_spec:
        from .pmmh import IndependentPrior
        try:
            prior = IndependentPrior({str(k): (float(v[0]), float(v[1]))
                                      for k, v in prior_spec.items()})
        except (TypeError, IndexError) as exc:
            raise ConfigError("fit.prior entries must be [loc, scale]") from exc
    return steps, prior, bool(section.get("exact_jacobian", False))


def cmd_fit(args) -> int:
    if args.out == "-":
        raise ConfigError("fit writes multiple files; --out must be a path")
    config, model, params = _load_model(args)
    data = list(_data_stream(args, config))
    steps, prior, exact_jacobian = _fit_settings(args, config, params)
    names = param_names(params)

    total = np.zeros(len(names))
    count = 0
    for c in range(args.chains):
        cfg = PmmhConfig(iterations=args.iterations, step_sizes=steps,
                         burn_in=args.burn_in, thin=args.thin,
                         n_particles=args.particles,
                         seed=args.seed + c, resampling=args.resampling,
                         engine=args.engine, t_start=args.t_start,
                         prior=prior, exact_jacobian=exact_jacobian)
        path = args.out if args.chains == 1 else f"{args.out}.chain{c}"
        with open(path, "w", newline="") as fh:
            fh.write(iolib.chain_header(names) + "\n")
            for state in pmmh_chain(model, data, params, cfg):
                fh.write(iolib.chain_row(state) + "\n")
                total += flatten_params(state.params)[0]
                count += 1
    if count == 0:
        raise ConfigError("chain emitted no states; check burn_in/thin")
    with open(f"{args.out}.posterior-mean.csv", "w", newline="") as fh:
        iolib.write_params_csv(fh, names, total / count)
    return EXIT_OK


# ---------------------------------------------------------------------------
# forecast
# ---------------------------------------------------------------------------

def cmd_forecast(args) -> int:
    config, model, params = _load_model(args)
    if model.observation_family == LGCP:
        raise ConfigError("event-stream forecasting is not supported")
    rng = np.random.default_rng(args.seed)
    data = _data_stream(args, config)

    if args.horizon is None:
        # One-step mode: each row's predictive band uses only earlier data.
        scan = filter_scan(model, data, args.particles, rng, params=params,
                           t_start=args.t_start, resampling=args.resampling,
                           predictive=True, band=_band(args.band))
        with _open_out(args.out) as fh:
            fh.write(iolib.FORECAST_HEADER + "\n")
            for s in scan:
                fh.write(iolib.forecast_row(s.time, s.y_mean, s.y_lower,
                                            s.y_upper) + "\n")
                fh.flush()
        return EXIT_OK

    if args.every <= 0:
        raise ConfigError("--every must be positive")
    lower_q, upper_q = _band(args.band)
    state = init_filter(model, args.particles, rng, params, t_start=args.t_start)
    n_obs = 0
    for obs in data:
        state = filter_step(model, state, obs, rng, params=params,
                            resampling=args.resampling)
        n_obs += 1
    if n_obs == 0:
        raise DataError(None, "forecast needs at least one observation")
    side = rng.spawn(1)[0]
    width = model.draw_block_width(params)
    x = state.particles
    w = state.weights
    with _open_out(args.out) as fh:
        fh.write(iolib.FORECAST_HEADER + "\n")
        n_steps = int(math.floor(args.horizon / args.every + 1e-9))
        t = state.t
        for _ in range(n_steps):
            eps = rng.standard_normal((x.shape[0], width))
            x = model.step_matrix(x, args.every, eps, params)
            t += args.every
            f = model.transform_vector(t)
            eta = model.link_batch(x @ f)
            draws = model.observation_draw_batch(eta, side, params)
            mean = float(np.sum(w * draws))
            lo, hi = weighted_quantile(draws, w, [lower_q, upper_q])
            fh.write(iolib.forecast_row(t, mean, lo, hi) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _verify_kalman(rng: np.random.Generator) -> tuple[bool, str]:
    init = InitialStateParams(mean=np.array([0.5]), sd=np.array([1.0]))
    sde = BrownianParams(mu=np.array([0.05]), sigma=np.array([0.4]))
    model = gaussian_model(sde=sde, init=init, scale=0.3)
    times = np.cumsum(rng.uniform(0.5, 2.0, size=40))
    sim = simulate_at_times(model, times, rng, t_start=0.0)
    values = np.array([o.value for o in sim.observations])
    exact, _, _ = kalman_log_likelihood(times, values, 0.5, 1.0, 0.05, 0.4, 0.3)
    lls = [path_log_likelihood(model, sim.observations, 400,
                               np.random.default_rng(seed))
           for seed in range(8)]
    se = float(np.std(lls, ddof=1) / math.sqrt(len(lls)))
    err = abs(float(np.mean(lls)) - exact)
    ok = err < 6.0 * se
    return ok, f"particle vs exact loglik: |err|={err:.4f}, 6*SE={6 * se:.4f}"


def _verify_conjugate(rng: np.random.Generator) -> tuple[bool, str]:
    obs_var = 1.0
    values = rng.normal(1.5, math.sqrt(obs_var), size=25)
    post_mean, post_var = conjugate_posterior(0.0, math.inf, obs_var, values)
    model = gaussian_model(
        sde=BrownianParams(mu=np.array([0.0]), sigma=np.array([0.0])),
        init=InitialStateParams(mean=np.array([0.0]), sd=np.array([0.0])),
        scale=obs_var)

    def exact_ll(tree: LeafParams) -> float:
        theta = float(tree.init.mean[0])
        return float(-0.5 * np.sum((values - theta) ** 2) / obs_var
                     - 0.5 * len(values) * math.log(2 * math.pi * obs_var))

    def proposal(tree, prng):
        theta = float(tree.init.mean[0])
        new = theta + 2.4 * math.sqrt(post_var) * prng.standard_normal()
        return LeafParams(init=InitialStateParams(mean=np.array([new]),
                                                  sd=tree.init.sd),
                          sde=tree.sde, scale=tree.scale), 0.0

    state = MetropState(model.params, -1e99, False, 0)
    samples = []
    for _ in range(4000):
        state = pmmh_step(state, exact_ll, lambda p: 0.0, proposal, rng)
        samples.append(float(state.params.init.mean[0]))
    kept = samples[500:]
    se = batch_means_se(kept, n_batches=20)
    err = abs(float(np.mean(kept)) - post_mean)
    ok = err < 5.0 * se
    return ok, f"chain mean vs conjugate posterior: |err|={err:.4f}, 5*SE={5 * se:.4f}"


def _verify_systematic(rng: np.random.Generator) -> tuple[bool, str]:
    from .filtering import resample_systematic
    n = 64
    w = rng.uniform(0.1, 1.0, size=n)
    w /= w.sum()
    ids = np.arange(n)
    for _ in range(300):
        picked = resample_systematic(ids, w, rng)
        counts = np.bincount(picked, minlength=n)
        lo = np.floor(n * w)
        hi = np.ceil(n * w)
        if np.any(counts < lo) or np.any(counts > hi):
            return False, "systematic resampling left the floor/ceil bounds"
    return True, "systematic counts stayed in floor/ceil bounds over 300 draws"


def _verify_identity(rng: np.random.Generator) -> tuple[bool, str]:
    from .compose import compose, identity_model
    init = InitialStateParams(mean=np.array([0.0]), sd=np.array([0.5]))
    sde = BrownianParams(mu=np.array([0.0]), sigma=np.array([0.3]))
    model = poisson_model(sde=sde, init=init)
    sim = simulate_at_times(model, np.arange(1.0, 31.0), rng)
    seed = int(rng.integers(2 ** 31))
    plain = path_log_likelihood(model, sim.observations, 128,
                                np.random.default_rng(seed))
    padded = path_log_likelihood(compose(model, identity_model()),
                                 sim.observations, 128,
                                 np.random.default_rng(seed))
    ok = plain == padded
    return ok, f"identity composition loglik bitwise equal: {plain} vs {padded}"


def cmd_verify(args) -> int:
    checks = [
        ("kalman-equivalence", _verify_kalman),
        ("conjugate-posterior", _verify_conjugate),
        ("systematic-bounds", _verify_systematic),
        ("identity-composition", _verify_identity),
    ]
    rng = np.random.default_rng(args.seed)
    failures = 0
    for name, check in checks:
        ok, detail = check(rng)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    return EXIT_OK if failures == 0 else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# Argument plumbing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pompkit",
        description="Particle filtering and Metropolis fitting for "
                    "continuous-time state-space models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        p.add_argument("--config", required=True, help="YAML model config")
        p.add_argument("--seed", type=int, default=0, help="RNG seed")
        p.add_argument("--out", default="-", help="output path (- for stdout)")
        p.add_argument("--params", default=None,
                       help="name,value CSV overriding config parameter values")
        if data:
            p.add_argument("--data", required=True,
                           help="time,value CSV (- for stdin)")
            p.add_argument("--t-start", type=float, default=0.0,
                           dest="t_start", help="filter origin time")
            p.add_argument("--resampling", choices=RESAMPLING_SCHEMES,
                           default="multinomial")

    p = sub.add_parser("simulate", help="draw synthetic observations")
    common(p)
    p.add_argument("--times", default=None, help="CSV of times to observe at")
    p.add_argument("--horizon", type=float, default=None,
                   help="end time (event models; or regular grid with --every)")
    p.add_argument("--every", type=float, default=1.0,
                   help="spacing for --horizon mode")
    p.add_argument("--grid-dt", type=float, default=None, dest="grid_dt",
                   help="latent grid spacing for event models")
    p.add_argument("--latent-out", default=None, dest="latent_out",
                   help="optional latent-path sidecar CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("filter", help="particle-filter a data stream")
    common(p, data=True)
    p.add_argument("--particles", type=int, default=500)
    p.add_argument("--band", type=float, default=0.99,
                   help="central credible-band coverage")
    p.add_argument("--ess-threshold", type=float, default=None,
                   dest="ess_threshold",
                   help="resample only when the effective sample size drops "
                        "below this count")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for particle arithmetic")
    p.add_argument("--grid-dt", type=float, default=None, dest="grid_dt",
                   help="hazard-integration grid for event models")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("fit", help="Metropolis parameter estimation")
    common(p, data=True)
    p.add_argument("--iterations", type=int, required=True)
    p.add_argument("--burn-in", type=int, default=0, dest="burn_in")
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--particles", type=int, default=200)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--engine", choices=("auto", "numpy", "numba"),
                   default="auto")
    p.add_argument("--step", action="append", default=None,
                   metavar="NAME=SIZE", help="random-walk step size")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="predictive means and bands")
    common(p, data=True)
    p.add_argument("--particles", type=int, default=500)
    p.add_argument("--band", type=float, default=0.99)
    p.add_argument("--horizon", type=float, default=None,
                   help="forecast this far past the data (default: one-step)")
    p.add_argument("--every", type=float, default=1.0,
                   help="row spacing in horizon mode")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("verify", help="run built-in oracle checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        # Reader went away (e.g. piped into head); suppress the shutdown
        # flush complaint and call it a success.
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except (DataError, NonmonotoneTimeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AllWeightsZeroError, WeightSumError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PompError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def run() -> None:
    sys.exit(main(sys.argv[1:]))
