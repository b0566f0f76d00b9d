"""The command-line front end, driven through main() plus one subprocess
check of the installed entry point."""

import io
import subprocess
import sys

import pytest

from pompkit.cli import main

POISSON_YAML = """\
components:
- kind: poisson
  sde: {kind: brownian, mu: 0.01, sigma: 0.15}
  init: {mean: 0.5, sd: 0.3}
fit:
  steps: {leaf0.mu0: 0.05, leaf0.sigma0: 0.1}
"""

GAUSSIAN_YAML = """\
components:
- kind: gaussian
  scale: 0.25
  sde: {kind: brownian, mu: 0.0, sigma: 0.2}
  init: {mean: 0.0, sd: 0.5}
"""

LGCP_YAML = """\
components:
- kind: lgcp
  sde: {kind: brownian, mu: 0.0, sigma: 0.2}
  init: {mean: 0.8, sd: 0.2}
"""


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / "pois.yaml").write_text(POISSON_YAML)
    (tmp_path / "gauss.yaml").write_text(GAUSSIAN_YAML)
    (tmp_path / "lgcp.yaml").write_text(LGCP_YAML)
    (tmp_path / "times.csv").write_text(
        "time\n" + "".join(f"{t}\n" for t in range(0, 30)))
    return tmp_path


def simulate_data(workspace, name="data.csv", seed=1):
    out = workspace / name
    code = main(["simulate", "--config", str(workspace / "pois.yaml"),
                 "--times", str(workspace / "times.csv"),
                 "--seed", str(seed), "--out", str(out)])
    assert code == 0
    return out


# =============================================================================
# simulate
# =============================================================================


def test_simulate_row_contract(workspace):
    data = simulate_data(workspace)
    lines = data.read_text().splitlines()
    assert lines[0] == "time,value"
    assert len(lines) == 31
    assert lines[1].startswith("0,")


def test_simulate_seed_reproducibility(workspace):
    a = simulate_data(workspace, "a.csv", seed=9)
    b = simulate_data(workspace, "b.csv", seed=9)
    c = simulate_data(workspace, "c.csv", seed=10)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_simulate_latent_sidecar(workspace):
    out = workspace / "obs.csv"
    latent = workspace / "latent.csv"
    code = main(["simulate", "--config", str(workspace / "pois.yaml"),
                 "--horizon", "5", "--every", "1",
                 "--out", str(out), "--latent-out", str(latent)])
    assert code == 0
    assert len(out.read_text().splitlines()) == 7  # header + t=0..5
    lines = latent.read_text().splitlines()
    assert lines[0] == "time,x0"
    assert len(lines) == 7


def test_simulate_lgcp_event_rows(workspace):
    out = workspace / "events.csv"
    code = main(["simulate", "--config", str(workspace / "lgcp.yaml"),
                 "--horizon", "20", "--seed", "3", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "time"
    times = [float(x) for x in lines[1:]]
    assert times == sorted(times)
    assert all(0 < t < 20 for t in times)


def test_simulate_needs_times_or_horizon(workspace):
    assert main(["simulate", "--config", str(workspace / "pois.yaml")]) == 2
    assert main(["simulate", "--config", str(workspace / "lgcp.yaml")]) == 2


# =============================================================================
# filter
# =============================================================================


def test_filter_output_shape_and_determinism(workspace):
    data = simulate_data(workspace)
    out1 = workspace / "f1.csv"
    out2 = workspace / "f2.csv"
    base = ["filter", "--config", str(workspace / "pois.yaml"),
            "--data", str(data), "--particles", "100", "--seed", "4"]
    assert main(base + ["--out", str(out1)]) == 0
    assert main(base + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    lines = out1.read_text().splitlines()
    assert lines[0] == "time,eta_mean,eta_lower,eta_upper,ll"
    assert len(lines) == 31
    row = lines[1].split(",")
    assert float(row[2]) <= float(row[1]) <= float(row[3])


def test_filter_reads_stdin(workspace, monkeypatch):
    data = simulate_data(workspace)
    out_file = workspace / "fs.csv"
    out_stdin = workspace / "fs2.csv"
    base = ["filter", "--config", str(workspace / "pois.yaml"),
            "--particles", "64", "--seed", "2"]
    assert main(base + ["--data", str(data), "--out", str(out_file)]) == 0
    monkeypatch.setattr(sys, "stdin", io.StringIO(data.read_text()))
    assert main(base + ["--data", "-", "--out", str(out_stdin)]) == 0
    assert out_file.read_bytes() == out_stdin.read_bytes()


def test_filter_exit_code_on_bad_data(workspace):
    bad = workspace / "bad.csv"
    bad.write_text("time,value\n2,1\n1,0\n")
    code = main(["filter", "--config", str(workspace / "pois.yaml"),
                 "--data", str(bad), "--out", str(workspace / "x.csv")])
    assert code == 3


def test_filter_exit_code_on_numeric_failure(workspace):
    # A Gaussian observation absurdly far from a near-deterministic model
    # underflows every particle weight.
    data = workspace / "wild.csv"
    data.write_text("time,value\n1,1e200\n")
    tight = workspace / "tight.yaml"
    tight.write_text("components:\n"
                     "- kind: gaussian\n"
                     "  scale: 1.0e-6\n"
                     "  sde: {kind: brownian, mu: 0.0, sigma: 1.0e-6}\n"
                     "  init: {mean: 0.0, sd: 1.0e-6}\n")
    code = main(["filter", "--config", str(tight), "--data", str(data),
                 "--particles", "32", "--out", str(workspace / "x.csv")])
    assert code == 4


def test_exit_code_on_missing_config(workspace):
    code = main(["filter", "--config", str(workspace / "nope.yaml"),
                 "--data", str(workspace / "times.csv")])
    assert code == 2


# =============================================================================
# fit
# =============================================================================


def test_fit_writes_chain_and_posterior_mean(workspace):
    data = simulate_data(workspace)
    out = workspace / "chain.csv"
    code = main(["fit", "--config", str(workspace / "pois.yaml"),
                 "--data", str(data), "--iterations", "40",
                 "--burn-in", "10", "--thin", "3", "--particles", "40",
                 "--seed", "6", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ("iteration,ll,accepted,leaf0.mean0,leaf0.sd0,"
                        "leaf0.mu0,leaf0.sigma0")
    assert len(lines) == 1 + 10  # (40 - 10) / 3 emitted states
    mean_file = workspace / "chain.csv.posterior-mean.csv"
    assert mean_file.exists()
    mean_lines = mean_file.read_text().splitlines()
    assert mean_lines[0] == "name,value"
    assert len(mean_lines) == 5


def test_fit_two_chains_and_params_flow_into_forecast(workspace):
    data = simulate_data(workspace)
    out = workspace / "mc.csv"
    code = main(["fit", "--config", str(workspace / "pois.yaml"),
                 "--data", str(data), "--iterations", "30",
                 "--particles", "40", "--chains", "2", "--seed", "6",
                 "--out", str(out)])
    assert code == 0
    assert (workspace / "mc.csv.chain0").exists()
    assert (workspace / "mc.csv.chain1").exists()
    assert not out.exists()
    # The posterior-mean file plugs straight back in as --params.
    fc = workspace / "fc.csv"
    code = main(["forecast", "--config", str(workspace / "pois.yaml"),
                 "--data", str(data), "--particles", "64",
                 "--params", str(workspace / "mc.csv.posterior-mean.csv"),
                 "--horizon", "3", "--every", "1", "--out", str(fc)])
    assert code == 0
    assert len(fc.read_text().splitlines()) == 4


def test_fit_requires_steps_and_path_out(workspace):
    data = simulate_data(workspace)
    bare = workspace / "bare.yaml"
    bare.write_text("components:\n- kind: poisson\n  sde: {kind: brownian}\n")
    code = main(["fit", "--config", str(bare), "--data", str(data),
                 "--iterations", "10", "--out", str(workspace / "c.csv")])
    assert code == 2
    code = main(["fit", "--config", str(workspace / "pois.yaml"),
                 "--data", str(data), "--iterations", "10", "--out", "-"])
    assert code == 2


# =============================================================================
# forecast
# =============================================================================


def test_forecast_one_step_rows(workspace):
    data = simulate_data(workspace)
    out = workspace / "one.csv"
    code = main(["forecast", "--config", str(workspace / "pois.yaml"),
                 "--data", str(data), "--particles", "64", "--seed", "5",
                 "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "time,y_mean,y_lower,y_upper"
    assert len(lines) == 31
    row = lines[5].split(",")
    assert float(row[2]) <= float(row[3])


def test_forecast_horizon_rows_and_determinism(workspace):
    data = simulate_data(workspace)
    args = ["forecast", "--config", str(workspace / "pois.yaml"),
            "--data", str(data), "--particles", "64", "--seed", "5",
            "--horizon", "6", "--every", "1.5"]
    a = workspace / "h1.csv"
    b = workspace / "h2.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert len(lines) == 5  # floor(6 / 1.5) rows after the header
    assert float(lines[1].split(",")[0]) == 30.5  # last datum at 29, +1.5


def test_forecast_rejects_lgcp(workspace):
    code = main(["forecast", "--config", str(workspace / "lgcp.yaml"),
                 "--data", str(workspace / "times.csv")])
    assert code == 2


# =============================================================================
# verify and the installed script
# =============================================================================


def test_verify_passes(capsys):
    assert main(["verify", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    lines = [l for l in out.splitlines() if l]
    assert len(lines) == 4
    assert all(l.startswith("PASS") for l in lines)


def test_installed_entry_point(workspace):
    data = simulate_data(workspace)
    proc = subprocess.run(
        ["pompkit", "filter", "--config", str(workspace / "pois.yaml"),
         "--data", str(data), "--particles", "50", "--seed", "1"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    lines = proc.stdout.splitlines()
    assert lines[0] == "time,eta_mean,eta_lower,eta_upper,ll"
    assert len(lines) == 31
