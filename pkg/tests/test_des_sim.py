import csv
import math

import pytest

from mecaoi.des_sim import TRACE_COLUMNS, SimConfig, simulate_device, simulate_population
from mecaoi.errors import InvalidConfig
from mecaoi.mec_model import EsEnvironment, Policy, SystemParams, device_aoi, finite_n_aoi


def test_zero_horizon_is_invalid():
    with pytest.raises(InvalidConfig):
        simulate_device(Policy(1.0, 1.0, 1.0), 1.0, EsEnvironment.finite(0.0, 1.0), SimConfig(horizon=0.0))


@pytest.mark.parametrize('cfg', [
    SimConfig(warmup_fraction=1.0),
    SimConfig(replications=0),
    SimConfig(workers=0),
])
def test_bad_config_is_invalid(cfg):
    with pytest.raises(InvalidConfig):
        cfg.validate()


def test_local_only_device_matches_mm1():
    cfg = SimConfig(horizon=2e4, replications=10, master_seed=11)
    estimate = simulate_device(Policy(1.0, 1.0, 1.0), 1.0, EsEnvironment.finite(0.0, 1.0), cfg)
    assert estimate.mean == pytest.approx(2.0, rel=0.05)
    assert 0 < estimate.ci_half_width < 0.2
    assert len(estimate.replication_means) == 10


def test_same_seed_gives_identical_estimates():
    cfg = SimConfig(horizon=500.0, replications=3, master_seed=5)
    env = EsEnvironment.finite(1.0, 10.0)
    first = simulate_device(Policy(0.5, 0.3, 1.0), 2.5, env, cfg)
    second = simulate_device(Policy(0.5, 0.3, 1.0), 2.5, env, cfg)
    assert first == second


def test_different_seeds_differ():
    env = EsEnvironment.finite(1.0, 10.0)
    first = simulate_device(Policy(0.5, 0.3, 1.0), 2.5, env, SimConfig(horizon=500.0, replications=2, master_seed=1))
    second = simulate_device(Policy(0.5, 0.3, 1.0), 2.5, env, SimConfig(horizon=500.0, replications=2, master_seed=2))
    assert first.mean != second.mean


def test_single_replication_has_unbounded_interval():
    cfg = SimConfig(horizon=200.0, replications=1)
    estimate = simulate_device(Policy(0.5, 0.3, 1.0), 2.5, EsEnvironment.finite(0.0, 1.0), cfg)
    assert math.isinf(estimate.ci_half_width)


def test_deliveries_never_exceed_arrivals():
    cfg = SimConfig(horizon=1000.0, replications=2)
    estimate = simulate_device(Policy(0.5, 0.3, 1.0), 2.5, EsEnvironment.finite(3.0, 10.0), cfg)
    assert 0 < estimate.deliveries <= estimate.arrivals


def test_population_of_one_is_the_isolated_device():
    cfg = SimConfig(horizon=1000.0, replications=3, master_seed=9)
    policy = Policy(0.5, 0.3, 1.0)
    sys = SystemParams(N=1, mu3_per_capita=4.0)
    population = simulate_population([policy], [2.5], sys, cfg)
    device = simulate_device(policy, 2.5, EsEnvironment.finite(0.0, sys.es_rate), cfg)
    assert population[0].mean == device.mean
    assert population[0].replication_means == device.replication_means


def test_population_size_mismatch_is_invalid():
    with pytest.raises(InvalidConfig):
        simulate_population([Policy(0.5, 0.3, 1.0)], [2.5], SystemParams(N=2, mu3_per_capita=1.0), SimConfig())


def test_trace_files_are_written(tmp_path):
    cfg = SimConfig(horizon=50.0, replications=2, trace_dir=str(tmp_path / 'traces'))
    simulate_device(Policy(0.5, 0.3, 1.0), 2.5, EsEnvironment.finite(1.0, 10.0), cfg)
    for k in range(2):
        with open(tmp_path / 'traces' / f'trace_rep{k}.csv', newline='') as f:
            rows = list(csv.reader(f))
        assert rows[0] == TRACE_COLUMNS
        assert len(rows) > 1
        times = [float(row[0]) for row in rows[1:]]
        assert times == sorted(times)


def test_parallel_replications_match_serial():
    env = EsEnvironment.finite(1.0, 10.0)
    serial = simulate_device(Policy(0.5, 0.3, 1.0), 2.5, env, SimConfig(horizon=300.0, replications=4))
    parallel = simulate_device(Policy(0.5, 0.3, 1.0), 2.5, env, SimConfig(horizon=300.0, replications=4, workers=2))
    assert serial == parallel


@pytest.mark.slow
def test_device_with_exogenous_traffic_matches_engine():
    policy = Policy(0.5, 0.3, 1.0)
    env = EsEnvironment.finite(1.0, 10.0)
    estimate = simulate_device(policy, 10.0, env, SimConfig(horizon=1e4, replications=20, master_seed=3))
    assert estimate.mean == pytest.approx(device_aoi(policy, 10.0, env), rel=0.05)


@pytest.mark.slow
def test_mm1_engine_agrees_with_simulation():
    estimate = simulate_device(
        Policy(1.0, 1.0, 1.0), 1.0, EsEnvironment.finite(0.0, 1.0),
        SimConfig(horizon=1e5, replications=20, master_seed=1),
    )
    assert abs(estimate.mean - 2.0) <= max(estimate.ci_half_width, 0.01 * 2.0)


@pytest.mark.slow
def test_population_matches_analytic_age_at_high_load():
    n = 50
    policy = Policy(0.5, 0.3, 1.0)
    sys = SystemParams(N=n, mu3_per_capita=1.0)
    cfg = SimConfig(horizon=1000.0, replications=20, workers=4)
    estimates = simulate_population([policy] * n, [10.0] * n, sys, cfg)
    analytic = finite_n_aoi([policy] * n, [10.0] * n, 0, sys)
    for estimate in estimates:
        assert abs(estimate.mean - analytic) <= 0.05 * analytic + estimate.ci_half_width
    assert sum(e.mean for e in estimates) / n == pytest.approx(analytic, rel=0.05)


@pytest.mark.slow
def test_interval_shrinks_with_square_root_of_replications():
    env = EsEnvironment.finite(1.0, 10.0)
    policy = Policy(0.5, 0.3, 1.0)
    few = simulate_device(policy, 2.5, env, SimConfig(horizon=500.0, replications=40, master_seed=4))
    many = simulate_device(policy, 2.5, env, SimConfig(horizon=500.0, replications=160, master_seed=4))
    assert 0.3 < many.ci_half_width / few.ci_half_width < 0.7


def test_device_age_is_a_sawtooth(tmp_path):
    cfg = SimConfig(horizon=200.0, replications=1, trace_dir=str(tmp_path))
    simulate_device(Policy(0.5, 0.3, 1.0), 2.5, EsEnvironment.finite(1.0, 10.0), cfg)
    with open(tmp_path / 'trace_rep0.csv', newline='') as f:
        rows = [row for row in csv.DictReader(f) if row['device_age']]
    drops = 0
    for prev, row in zip(rows, rows[1:]):
        elapsed = float(row['t']) - float(prev['t'])
        jump = float(row['device_age']) - float(prev['device_age']) - elapsed
        assert jump <= 1e-9
        if row['event_type'] != 'delivery':
            assert jump == pytest.approx(0.0, abs=1e-9)
        elif jump < -1e-9:
            drops += 1
    assert drops > 0
