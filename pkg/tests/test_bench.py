import math

import numpy as np
import pytest

from hiddendiff import ConfigError
from hiddendiff import bench
from hiddendiff.config import ExperimentConfig, build_config, load_config, read_pairs


SMALL = dict(T=60, n_runs=3, np_grid=(20, 40), hist_bins=8, snapshots=(10, 59))


# ---------------------------------------------------------------- configuration


def test_defaults_round_trip_through_text():
    cfg = ExperimentConfig()
    assert build_config(read_pairs(cfg.to_text())).to_text() == cfg.to_text()


def test_overrides_are_typed():
    cfg = build_config({"T": "250", "np_grid": "10,20", "theta1": "0.3", "bench_mbw": "false", "jitter_eps": "1e-3"})
    assert cfg.T == 250 and cfg.np_grid == (10, 20)
    assert cfg.theta == (-0.1, 0.3)
    assert cfg.bench_mbw is False and cfg.jitter_eps == 1e-3


def test_extra_theta_extends_drift():
    cfg = build_config({"theta2": "0.05", "init_mean": "1,0,0,0,0", "init_cov_diag": "25,.01,.01,.01,.01"})
    assert cfg.theta == (-0.1, 0.1, 0.05)


@pytest.mark.parametrize(
    "pairs",
    [{"nonsense": "1"}, {"T": "abc"}, {"T": "0"}, {"theta3": "0.1"}, {"dt": "-1"}, {"n_runs": "0"}, {"bench_mbw": "maybe"}],
)
def test_bad_config_rejected(pairs):
    with pytest.raises(ConfigError):
        build_config(pairs)


def test_config_file_comments_and_errors(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# comment\nT = 42  # trailing\n\nseed=3\n")
    cfg = load_config(path)
    assert (cfg.T, cfg.seed) == (42, 3)
    path.write_text("T 42\n")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.txt")


def test_lattice_constant_uses_sub_steps():
    cfg = ExperimentConfig(N=32, L=32.0, dt=1.0, substeps=4)
    assert cfg.dx == 1.0 and cfg.D0 == 4.0


# ---------------------------------------------------------------- seeds and divergence


def test_derived_seeds_are_stable_and_distinct():
    a = bench.derive_seed(0, 1, 2)
    assert a == bench.derive_seed(0, 1, 2)
    assert len({bench.derive_seed(0, r, k) for r in range(20) for k in range(4)}) == 80
    assert 0 <= a < 2**63


def test_divergence_flags():
    truth = {"theta0": -0.1, "theta1": 0.1, "D": 0.8}
    est = {"theta0": 0.2, "abs_theta0": 0.12, "theta1": 0.16, "D": 0.41}
    assert bench.diverged(est, truth, 0.5) == {"theta0": False, "theta1": True, "D": False}
    assert bench.diverged(est, truth, math.inf) == {"theta0": False, "theta1": False, "D": False}
    nan = {"theta0": math.nan, "abs_theta0": math.nan, "theta1": math.nan, "D": math.nan}
    assert all(bench.diverged(nan, truth, math.inf).values())


def test_theta0_divergence_ignores_sign():
    truth = {"theta0": -0.1}
    assert bench.diverged({"theta0": 0.1}, truth, 0.5) == {"theta0": False}
    assert bench.diverged({"theta0": 0.3}, truth, 0.5) == {"theta0": True}


# ---------------------------------------------------------------- drivers


def test_generate_is_reproducible_per_run():
    cfg = ExperimentConfig(T=50)
    a, b = bench.generate(cfg, 3), bench.generate(cfg, 3)
    np.testing.assert_array_equal(a.observations, b.observations)
    assert not np.array_equal(a.states, bench.generate(cfg, 4).states)


def test_filter_snapshots_sum_to_one():
    cfg = ExperimentConfig(**SMALL)
    res = bench.filter_trajectory(cfg, bench.generate(cfg), n_particles=50)
    assert sorted(res.snapshots) == [10, 59]
    for mass in res.snapshots.values():
        assert abs(mass.sum() - 1.0) <= 1e-9


def test_initial_distribution():
    p = bench.initial_distribution(ExperimentConfig())
    assert p.sum() == pytest.approx(1.0)
    assert p.argmax() == 0 and p[1] == pytest.approx(p[-1])
    q = bench.initial_distribution(ExperimentConfig(x0=5.2))
    assert q[5] == 1.0


def test_initial_params_match_requested_dynamics():
    cfg = ExperimentConfig()
    from hiddendiff.baumwelch import extract_drift_diffusion

    F, D = extract_drift_diffusion(bench.initial_params(cfg), cfg.D0, cfg.dx)
    np.testing.assert_allclose(F, cfg.init_drift)
    np.testing.assert_allclose(D, cfg.init_D)


@pytest.mark.slow
def test_symmetric_walk_gives_flat_drift():
    cfg = ExperimentConfig(theta=(0.0,), K=0, T=4000, seed=0)
    res = bench.fit_trajectory(cfg, bench.generate(cfg))
    assert res.report.converged
    assert np.abs(res.F_hat).max() <= 0.05
    assert np.all(np.diff(res.report.loglik_trace) >= -1e-8)


def test_mbw_fit_on_short_data():
    cfg = ExperimentConfig(T=200, seed=1)
    res = bench.fit_trajectory(cfg, bench.generate(cfg))
    assert res.x.shape == res.F_hat.shape == res.D_hat.shape == (32,)
    assert res.theta_hat[1] == pytest.approx(res.theta_hat_mirrored[1], abs=1e-9)
    assert res.theta_hat[0] == pytest.approx(-res.theta_hat_mirrored[0], abs=1e-9)
    assert np.all(np.diff(res.report.loglik_trace) >= -1e-8)


# ---------------------------------------------------------------- benchmark


def test_bench_with_infinite_threshold_reports_zero():
    cfg = ExperimentConfig(**{**SMALL, "n_runs": 1}, divergence_threshold=math.inf, bench_mbw=False)
    result = bench.run_bench(cfg)
    header, rows = result.table.rows()
    assert header == ["parameter", "np20", "np40"]
    assert [r[0] for r in rows] == ["theta0", "theta1", "D"]
    assert all(v == "0.0" for r in rows for v in r[1:])


def test_bench_conserves_runs_and_is_deterministic():
    cfg = ExperimentConfig(**SMALL, bench_mbw=False)
    a = bench.run_bench(cfg)
    b = bench.run_bench(cfg)
    assert a.runs == b.runs
    assert len(a.runs) == cfg.n_runs * len(cfg.np_grid)
    for p in a.table.parameters:
        for n in cfg.np_grid:
            diverged = a.table.counts[(p, n)]
            kept = sum(1 for r in a.runs if r["n_particles"] == n and not r[f"diverged_{p}"])
            assert diverged + kept == cfg.n_runs
            assert 0.0 <= a.table.percent(p, n) <= 100.0


def test_bench_filter_seeds_differ_per_cell():
    cfg = ExperimentConfig(**SMALL, bench_mbw=False)
    seeds = [r["seed"] for r in bench.run_bench(cfg).runs]
    assert len(set(seeds)) == len(seeds)


def test_bench_counts_failures_as_diverged():
    # a vanishing likelihood bandwidth starves every particle
    cfg = ExperimentConfig(**{**SMALL, "n_runs": 2}, obs_bandwidth=1e-300, bench_mbw=False)
    result = bench.run_bench(cfg)
    assert all(r["failed"] for r in result.runs)
    assert all(result.table.percent(p, n) == 100.0 for p in result.table.parameters for n in cfg.np_grid)


def test_bench_writes_reports(tmp_path):
    cfg = ExperimentConfig(**{**SMALL, "n_runs": 2, "T": 40})
    result = bench.run_bench(cfg)
    bench.write_bench_outputs(result, cfg, tmp_path)
    table = (tmp_path / "divergence_T40.csv").read_text().splitlines()
    assert table[0] == "parameter,np20,np40" and len(table) == 4
    assert len((tmp_path / "bench_runs_T40.csv").read_text().splitlines()) == 1 + 4
    assert len((tmp_path / "bench_mbw_T40.csv").read_text().splitlines()) == 1 + 2
