"""Config files and CSV streams for the command-line front end.

The config is a YAML mapping with a ``components`` list; components are
composed left to right, so the first one owns the observation
distribution.  Data files are CSV with a ``time,value`` header (or just
``time`` for event streams); times are plain numbers, which pass through
untouched, or ISO-8601 timestamps, which are converted to
seconds-since-first-observation (or since a configured ``epoch``) and
divided by the configured ``time_unit``.
"""
from __future__ import annotations

import csv
import math
from datetime import datetime
from typing import Iterable, Iterator, Mapping, TextIO

import numpy as np
import yaml

from .compose import compose_all
from .errors import ConfigError, DataError, NonmonotoneTimeError, PompError
from .models import (Model, bernoulli_model, gaussian_model, lgcp_model,
                     poisson_model, seasonal_model)
from .pmmh import flatten_params, unflatten_params
from .trees import (BrownianParams, InitialStateParams,
                    OrnsteinUhlenbeckParams, ParamTree, TimedObservation)

TIME_UNITS = {"seconds": 1.0, "minutes": 60.0, "hours": 3600.0, "days": 86400.0}

FILTER_HEADER = "time,eta_mean,eta_lower,eta_upper,ll"
FORECAST_HEADER = "time,y_mean,y_lower,y_upper"


def fmt(x: float) -> str:
    """Serialise a float with 17 significant digits (round-trip exact)."""
    return "%.17g" % float(x)


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

def load_config(path: str) -> dict:
    """Read and structurally validate a YAML config file."""
    try:
        with open(path) as fh:
            config = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(config, Mapping):
        raise ConfigError("config must be a mapping")
    components = config.get("components")
    if not isinstance(components, list) or not components:
        raise ConfigError("config needs a non-empty components list")
    return dict(config)


def _as_vector(value, dim: int, what: str) -> np.ndarray:
    if isinstance(value, (int, float)):
        return np.full(dim, float(value))
    try:
        out = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be a number or list of numbers") from exc
    if out.shape != (dim,):
        raise ConfigError(f"{what} must have {dim} entries, got shape {out.shape}")
    return out


def _build_init(spec, dim: int, where: str) -> InitialStateParams:
    spec = spec if spec is not None else {}
    if not isinstance(spec, Mapping):
        raise ConfigError(f"{where}: init must be a mapping")
    mean = _as_vector(spec.get("mean", 0.0), dim, f"{where}: init.mean")
    sd = _as_vector(spec.get("sd", 1.0), dim, f"{where}: init.sd")
    return InitialStateParams(mean=mean, sd=sd)


def _build_sde(spec, dim: int, where: str):
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise ConfigError(f"{where}: sde needs a kind (brownian or ou)")
    kind = str(spec["kind"]).lower()
    if kind == "brownian":
        return BrownianParams(
            mu=_as_vector(spec.get("mu", 0.0), dim, f"{where}: sde.mu"),
            sigma=_as_vector(spec.get("sigma", 1.0), dim, f"{where}: sde.sigma"))
    if kind == "ou":
        return OrnsteinUhlenbeckParams(
            alpha=_as_vector(spec.get("alpha", 1.0), dim, f"{where}: sde.alpha"),
            theta=_as_vector(spec.get("theta", 0.0), dim, f"{where}: sde.theta"),
            sigma=_as_vector(spec.get("sigma", 1.0), dim, f"{where}: sde.sigma"))
    raise ConfigError(f"{where}: unknown sde kind {kind!r}")


def _build_component(spec, index: int) -> Model:
    where = f"components[{index}]"
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise ConfigError(f"{where}: component needs a kind")
    kind = str(spec["kind"]).lower()
    try:
        if kind == "seasonal":
            period = float(spec.get("period", 0.0))
            harmonics = int(spec.get("harmonics", 1))
            if period <= 0:
                raise ConfigError(f"{where}: seasonal component needs a period")
            dim = 2 * harmonics
            return seasonal_model(
                period=period, harmonics=harmonics,
                scale=_require_scale(spec, where),
                sde=_build_sde(spec.get("sde"), dim, where),
                init=_build_init(spec.get("init"), dim, where))
        dim = int(spec.get("dim", 1))
        sde = _build_sde(spec.get("sde"), dim, where)
        init = _build_init(spec.get("init"), dim, where)
        if kind == "poisson":
            return poisson_model(sde=sde, init=init)
        if kind == "bernoulli":
            return bernoulli_model(sde=sde, init=init)
        if kind == "gaussian":
            return gaussian_model(sde=sde, init=init,
                                  scale=_require_scale(spec, where))
        if kind == "lgcp":
            return lgcp_model(sde=sde, init=init)
    except ConfigError:
        raise
    except PompError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unknown component kind {kind!r}")


def _require_scale(spec, where: str) -> float:
    scale = spec.get("scale")
    if scale is None:
        raise ConfigError(f"{where}: this component kind needs a scale "
                          f"(observation variance)")
    return float(scale)


def build_model(config: Mapping) -> Model:
    """Compose the configured components, left to right."""
    components = [
        _build_component(spec, i) for i, spec in enumerate(config["components"])
    ]
    try:
        return compose_all(*components)
    except PompError as exc:
        raise ConfigError(f"components do not compose: {exc}") from exc


def time_scale(config: Mapping) -> float:
    """Seconds per configured time unit."""
    unit = config.get("time_unit", "seconds")
    if isinstance(unit, (int, float)):
        if unit <= 0:
            raise ConfigError("time_unit must be positive")
        return float(unit)
    try:
        return TIME_UNITS[str(unit).lower()]
    except KeyError:
        raise ConfigError(f"unknown time_unit {unit!r}; use one of "
                          f"{sorted(TIME_UNITS)} or seconds-per-unit") from None


def config_epoch(config: Mapping) -> datetime | None:
    """Optional reference instant for ISO-8601 timestamps."""
    epoch = config.get("epoch")
    if epoch is None:
        return None
    if isinstance(epoch, datetime):
        return epoch
    try:
        return datetime.fromisoformat(str(epoch))
    except ValueError as exc:
        raise ConfigError(f"epoch {epoch!r} is not an ISO-8601 timestamp") from exc


# ---------------------------------------------------------------------------
# Data streams
# ---------------------------------------------------------------------------

def ingest_csv(source: str | TextIO, unit: float = 1.0,
               epoch: datetime | None = None) -> Iterator[TimedObservation]:
    """Stream a data CSV as timed observations.

    ``source`` is a path or an open text stream.  Rows arrive lazily so
    arbitrarily long files can be filtered in bounded memory.  Numeric
    times pass through untouched; ISO-8601 times become
    ``(t - reference) / unit`` with the reference being ``epoch`` or,
    failing that, the first timestamp seen.
    """
    if isinstance(source, str):
        with open(source, newline="") as fh:
            yield from _ingest_rows(fh, unit, epoch)
    else:
        yield from _ingest_rows(source, unit, epoch)


def _ingest_rows(fh: TextIO, unit: float,
                 epoch: datetime | None) -> Iterator[TimedObservation]:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(1, "data stream is empty; expected a header row") from None
    header = [h.strip().lower() for h in header]
    if header == ["time", "value"]:
        has_value = True
    elif header == ["time"]:
        has_value = False
    else:
        raise DataError(1, f"expected header time,value or time, got "
                        f"{','.join(header)!r}")
    ref = epoch
    last = -math.inf
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != (2 if has_value else 1):
            raise DataError(line, f"expected {2 if has_value else 1} columns, "
                            f"got {len(row)}")
        cell = row[0].strip()
        try:
            t = float(cell)
        except ValueError:
            try:
                stamp = datetime.fromisoformat(cell)
            except ValueError:
                raise DataError(line, f"unreadable time {cell!r}") from None
            if ref is None:
                ref = stamp
            t = (stamp - ref).total_seconds() / unit
        if has_value:
            try:
                value = float(row[1])
            except ValueError:
                raise DataError(line, f"unreadable value {row[1]!r}") from None
        else:
            value = math.nan
        if t < last:
            raise NonmonotoneTimeError(
                f"time {cell!r} is earlier than the previous row", line=line)
        last = t
        yield TimedObservation(time=t, value=value)


def read_times_csv(path: str, unit: float = 1.0,
                   epoch: datetime | None = None) -> list[float]:
    """Times from a CSV with a ``time`` (or ``time,value``) header."""
    return [obs.time for obs in ingest_csv(path, unit=unit, epoch=epoch)]


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def write_observations_csv(fh: TextIO,
                           observations: Iterable[TimedObservation],
                           events_only: bool = False) -> None:
    """Simulation output: ``time,value`` rows, or bare ``time`` for events."""
    fh.write("time\n" if events_only else "time,value\n")
    for obs in observations:
        if events_only:
            fh.write(f"{fmt(obs.time)}\n")
        else:
            fh.write(f"{fmt(obs.time)},{fmt(obs.value)}\n")


def write_states_csv(fh: TextIO, times, states: np.ndarray) -> None:
    """Latent-path sidecar: ``time,x0,x1,...`` rows."""
    dim = states.shape[1]
    fh.write("time," + ",".join(f"x{i}" for i in range(dim)) + "\n")
    for t, row in zip(times, states):
        fh.write(fmt(t) + "," + ",".join(fmt(v) for v in row) + "\n")


def filter_row(summary) -> str:
    """One filter-output CSV row (matches :data:`FILTER_HEADER`)."""
    return ",".join([fmt(summary.time), fmt(summary.eta_mean),
                     fmt(summary.eta_lower), fmt(summary.eta_upper),
                     fmt(summary.ll)])


def forecast_row(time: float, mean: float, lower: float, upper: float) -> str:
    """One forecast CSV row (matches :data:`FORECAST_HEADER`)."""
    return ",".join([fmt(time), fmt(mean), fmt(lower), fmt(upper)])


def chain_header(names: list[str]) -> str:
    return ",".join(["iteration", "ll", "accepted"] + list(names))


def chain_row(state) -> str:
    values = flatten_params(state.params)[0]
    cells = [str(state.iteration), fmt(state.ll), str(int(state.accepted))]
    cells.extend(fmt(v) for v in values)
    return ",".join(cells)


def write_params_csv(fh: TextIO, names: list[str], values) -> None:
    """Parameter file: ``name,value`` rows in canonical order."""
    fh.write("name,value\n")
    for name, value in zip(names, values):
        fh.write(f"{name},{fmt(value)}\n")


def read_params_csv(path: str) -> dict[str, float]:
    """Parameter file back into a name-to-value mapping."""
    out: dict[str, float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(1, "parameter file is empty") from None
        if [h.strip().lower() for h in header] != ["name", "value"]:
            raise DataError(1, "expected header name,value")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(line, f"expected 2 columns, got {len(row)}")
            try:
                out[row[0].strip()] = float(row[1])
            except ValueError:
                raise DataError(line, f"unreadable value {row[1]!r}") from None
    return out


def apply_param_overrides(params: ParamTree,
                          overrides: Mapping[str, float]) -> ParamTree:
    """Overlay named values onto a parameter tree (unknown names reject)."""
    values, names, _ = flatten_params(params)
    index = {name: i for i, name in enumerate(names)}
    unknown = [name for name in overrides if name not in index]
    if unknown:
        raise ConfigError(f"unknown parameter names: {sorted(unknown)}")
    out = values.copy()
    for name, value in overrides.items():
        out[index[name]] = float(value)
    return unflatten_params(params, out)
