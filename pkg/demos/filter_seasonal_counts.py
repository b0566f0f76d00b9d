"""Filter an hourly count stream whose rate drifts and breathes daily.

Simulates three weeks of Poisson counts from a random-walk level plus a
24-hour harmonic, then runs the particle filter over the same stream and
reports how often the 99% one-step-ahead band caught the next count.
"""

import numpy as np

from pompkit import (BrownianParams, InitialStateParams, compose,
                     filter_scan, poisson_model, seasonal_model,
                     simulate_at_times)


def build_model():
    level = poisson_model(
        sde=BrownianParams(mu=[0.0], sigma=[0.05]),
        init=InitialStateParams(mean=[1.0], sd=[0.2]),
    )
    daily = seasonal_model(
        period=24.0, harmonics=1, scale=0.05,
        sde=BrownianParams(mu=[0.0, 0.0], sigma=[0.01, 0.01]),
        init=InitialStateParams(mean=[0.6, -0.3], sd=[0.05, 0.05]),
    )
    return compose(level, daily)


def main() -> None:
    model = build_model()
    times = np.arange(1.0, 24.0 * 21 + 1.0)  # three weeks, hourly
    data = simulate_at_times(model, times, np.random.default_rng(7)).observations

    hits = 0
    last = None
    print(f"{'time':>7} {'count':>5} {'rate':>7} {'99% count band':>16}")
    for obs, s in zip(data, filter_scan(model, data, 1000,
                                        np.random.default_rng(8),
                                        predictive=True)):
        if s.y_lower <= obs.value <= s.y_upper:
            hits += 1
        if int(s.time) % 24 == 0:  # one line per simulated day
            print(f"{s.time:7.1f} {obs.value:5.0f} {s.eta_mean:7.2f} "
                  f"[{s.y_lower:6.1f}, {s.y_upper:6.1f}]")
        last = s

    n = len(data)
    print(f"\nlog-likelihood of the stream: {last.ll:.2f}")
    print(f"99% predictive band covered {hits}/{n} counts "
          f"({100.0 * hits / n:.1f}%)")


if __name__ == "__main__":
    main()
