import csv

import numpy as np
import pytest

from hiddendiff.cli import main


def run(tmp_path, *argv):
    return main([*argv, "--out-dir", str(tmp_path)])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_writes_full_trajectory(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--T", "1000", "--seed", "7") == 0
    rows = read_csv(tmp_path / "trajectory.csv")
    assert len(rows) == 1001
    assert list(rows[0]) == ["t", "x", "y"]
    out = capsys.readouterr().out
    assert "jitter_eps=0.005" in out and "seed=7" in out
    assert (tmp_path / "config_resolved.txt").read_text().startswith("theta0=-0.1")


def test_simulate_is_byte_reproducible(tmp_path):
    run(tmp_path / "a", "simulate", "--T", "300", "--seed", "7")
    run(tmp_path / "b", "simulate", "--T", "300", "--seed", "7")
    assert (tmp_path / "a/trajectory.csv").read_bytes() == (tmp_path / "b/trajectory.csv").read_bytes()


def test_frozen_model_gives_constant_state(tmp_path):
    run(tmp_path, "simulate", "--T", "50", "--D", "0", "--sigma", "0", "--theta0", "0", "--theta1", "0", "--x0", "2.5")
    rows = read_csv(tmp_path / "trajectory.csv")
    assert {r["x"] for r in rows} == {"2.5"}


def test_noise_free_observations_are_the_cosine(tmp_path):
    run(tmp_path, "simulate", "--T", "200", "--sigma", "0")
    rows = read_csv(tmp_path / "trajectory.csv")
    x = np.array([float(r["x"]) for r in rows])
    y = np.array([float(r["y"]) for r in rows])
    np.testing.assert_array_equal(y, np.cos(2 * np.pi * x / 32.0))


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("T=20\nseed=4\n")
    assert run(tmp_path, "simulate", "--config", str(cfg), "--seed", "5") == 0
    resolved = (tmp_path / "config_resolved.txt").read_text().splitlines()
    assert "T=20" in resolved and "seed=5" in resolved


def test_dash_and_underscore_flags_are_equivalent(tmp_path):
    run(tmp_path / "a", "simulate", "--T", "10", "--jitter-eps", "0.02")
    run(tmp_path / "b", "simulate", "--T", "10", "--jitter_eps", "0.02")
    assert (tmp_path / "a/config_resolved.txt").read_text() == (tmp_path / "b/config_resolved.txt").read_text()


def test_pf_writes_trace_and_density(tmp_path):
    assert run(tmp_path, "pf", "--T", "120", "--n_particles", "200", "--snapshots", "10,100", "--hist_bins", "16") == 0
    trace = read_csv(tmp_path / "pf_trace.csv")
    assert len(trace) == 121
    assert list(trace[0]) == ["t", "x_hat", "theta0_hat", "theta1_hat", "D_hat", "ess"]
    dens = read_csv(tmp_path / "pf_density.csv")
    for t in ("10", "100"):
        assert abs(sum(float(r["mass"]) for r in dens if r["t"] == t) - 1.0) <= 1e-9


def test_pf_reuses_existing_trajectory(tmp_path):
    run(tmp_path, "simulate", "--T", "30", "--seed", "2")
    before = (tmp_path / "trajectory.csv").read_bytes()
    run(tmp_path, "pf", "--T", "999", "--n_particles", "50", "--seed", "9")
    assert (tmp_path / "trajectory.csv").read_bytes() == before
    assert len(read_csv(tmp_path / "pf_trace.csv")) == 31


def test_pf_accepts_a_trajectory_without_states(tmp_path):
    path = tmp_path / "obs.csv"
    path.write_text("t,y\n0,1.0\n1,0.99\n2,0.97\n")
    assert run(tmp_path, "pf", "--trajectory", str(path), "--n_particles", "50") == 0
    assert len(read_csv(tmp_path / "pf_trace.csv")) == 3


def test_mbw_outputs(tmp_path, capsys):
    assert run(tmp_path, "mbw", "--T", "200", "--seed", "1") == 0
    states = read_csv(tmp_path / "mbw_states.csv")
    assert len(states) == 32 and list(states[0]) == ["i", "x", "F_hat", "D_hat"]
    ll = [float(r["loglik"]) for r in read_csv(tmp_path / "mbw_loglik.csv")]
    assert np.all(np.diff(ll) >= -1e-8)
    fit_text = (tmp_path / "mbw_fit.txt").read_text()
    assert "converged=true" in fit_text and "plus_c0=" in fit_text
    assert "converged=True" in capsys.readouterr().out


def test_bench_prints_table(tmp_path, capsys):
    code = run(tmp_path, "bench", "--T", "40", "--n_runs", "2", "--np_grid", "20,40", "--bench_mbw", "false")
    assert code == 0
    out = capsys.readouterr().out.splitlines()
    assert "parameter,np20,np40" in out
    assert (tmp_path / "divergence_T40.csv").exists()
    assert not (tmp_path / "bench_mbw_T40.csv").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--T", "0"],
        ["simulate", "--N", "two"],
        ["pf", "--trajectory", "/nonexistent/traj.csv"],
        ["simulate", "--resampling", "stratified"],
    ],
)
def test_config_errors_exit_2(tmp_path, argv, capsys):
    assert run(tmp_path, *argv) == 2
    assert capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert run(tmp_path, "simulate", "--config", str(tmp_path / "nope.cfg")) == 2


def test_weight_collapse_exits_3(tmp_path, capsys):
    code = run(tmp_path, "pf", "--T", "20", "--obs_bandwidth", "1e-300", "--n_particles", "10")
    assert code == 3
    assert "t=" in capsys.readouterr().err


def test_unknown_flag_is_an_argparse_error(tmp_path):
    with pytest.raises(SystemExit) as err:
        run(tmp_path, "simulate", "--bogus", "1")
    assert err.value.code == 2


def test_every_command_is_deterministic(tmp_path):
    args = {
        "simulate": ["--T", "80"],
        "pf": ["--T", "80", "--n_particles", "100"],
        "mbw": ["--T", "80"],
        "bench": ["--T", "40", "--n_runs", "2", "--np_grid", "20,40"],
    }
    for cmd, extra in args.items():
        a, b = tmp_path / cmd / "a", tmp_path / cmd / "b"
        assert run(a, cmd, *extra) == 0 and run(b, cmd, *extra) == 0
        files = sorted(p.name for p in a.iterdir())
        assert files == sorted(p.name for p in b.iterdir())
        for name in files:
            assert (a / name).read_bytes() == (b / name).read_bytes(), f"{cmd}: {name}"
