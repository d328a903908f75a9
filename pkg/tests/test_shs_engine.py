import numpy as np
import pytest

from mecaoi.des_sim import simulate_occupancy
from mecaoi.errors import InvalidParams, SingularSystem
from mecaoi.mec_model import EsEnvironment, Policy, build_mec_shs
from mecaoi.shs_engine import (
    ShsModel,
    Transition,
    ZERO,
    average_aoi,
    balance_residual,
    correlation_residual,
    solve,
    solve_correlations,
    solve_stationary,
    validate_model,
)


def chain(m, edges, num_ages=1):
    """Single-age chain whose age is reset on every transition"""
    return ShsModel(
        num_states=m,
        num_ages=num_ages,
        transitions=[Transition(s, t, rate, (ZERO,) * num_ages) for s, t, rate in edges],
        growth=[(1,) * num_ages] * m,
    )


def test_well_formed_two_state_chain_has_empty_report():
    report = validate_model(chain(2, [(0, 1, 1.0), (1, 0, 1.0)]))
    assert not report
    assert report.ok


def test_absorbing_state_is_reducible():
    report = validate_model(chain(2, [(0, 1, 1.0)]))
    assert any(v.startswith('reducible chain') for v in report.violations)


def test_two_reachable_closed_classes_are_reducible():
    model = chain(5, [(0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0), (3, 1, 1.0), (2, 4, 1.0), (4, 2, 1.0)])
    report = validate_model(model)
    assert any('2 closed classes' in v for v in report.violations)
    with pytest.raises(SingularSystem):
        solve(model)


def test_negative_rate_and_dangling_index_are_reported():
    bad = ShsModel(
        num_states=2,
        num_ages=1,
        transitions=[Transition(0, 1, -1.0, (0,)), Transition(1, 5, 1.0, (3,))],
        growth=[(1,), (1,)],
    )
    violations = validate_model(bad).violations
    assert any('nonpositive rate' in v for v in violations)
    assert any('dangling' in v for v in violations)
    assert any('reset entry' in v for v in violations)
    with pytest.raises(InvalidParams):
        solve(bad)


def test_transient_states_get_zero_mass():
    model = chain(3, [(0, 1, 1.0), (1, 2, 2.0), (2, 1, 2.0)])
    assert validate_model(model).ok
    pi = solve_stationary(model).probs
    assert pi[0] == 0.0
    assert pi[1:] == pytest.approx([0.5, 0.5], abs=1e-12)


def test_two_state_stationary_distribution(gallery):
    model = gallery['two_state']
    pi = solve_stationary(model).probs
    assert pi == pytest.approx([0.75, 0.25], abs=1e-12)
    assert pi.sum() == pytest.approx(1.0, abs=1e-12)


def test_two_state_renewal_age(gallery):
    # age restarts on every 1 -> 0 jump: E[T^2] / (2 E[T]) with T ~ exp(1) + exp(3)
    assert solve(gallery['two_state']).delta == pytest.approx(13.0 / 12.0, abs=1e-12)


def test_mm1_lcfs_correlations(mm1):
    model = mm1(1.0, 1.0)
    pi = solve_stationary(model)
    v = solve_correlations(model, pi).v
    assert pi.probs == pytest.approx([1.0])
    assert v[0] == pytest.approx([2.0, 1.0], abs=1e-12)
    assert average_aoi(v) == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize('lam,mu', [(1.0, 1.0), (2.0, 4.0), (0.3, 7.0), (5.0, 0.5)])
def test_mm1_lcfs_average_age(mm1, lam, mu):
    assert solve(mm1(lam, mu)).delta == pytest.approx(1.0 / lam + 1.0 / mu, abs=1e-12)


def test_mm1_with_idle_state_matches_always_busy_model(gallery):
    assert solve(gallery['mm1_lcfs_idle']).delta == pytest.approx(2.0, abs=1e-12)
    assert solve(gallery['mm1_lcfs']).delta == pytest.approx(2.0, abs=1e-12)


def test_time_rescaling_divides_age(gallery):
    for model in gallery.values():
        assert solve(model.scaled(4.0)).delta == pytest.approx(solve(model).delta / 4.0, rel=1e-10)


def test_permutation_invariance(base_policy, base_env):
    model = build_mec_shs(base_policy, 2.5, base_env)
    perm = [3, 7, 0, 5, 1, 6, 2, 4]
    base = solve(model)
    moved = solve(model.relabeled(perm))
    assert moved.delta == pytest.approx(base.delta, rel=1e-12)
    assert moved.pi.probs[perm] == pytest.approx(base.pi.probs, abs=1e-12)


def test_gallery_sanity(gallery):
    assert {'two_state', 'mm1_lcfs', 'mm1_lcfs_idle'} <= set(gallery)
    for name, model in gallery.items():
        solution = solve(model)
        assert (solution.pi.probs >= 0).all(), name
        assert solution.pi.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert balance_residual(model, solution.pi) <= 1e-10
        assert (solution.v.v >= 0).all(), name


@pytest.mark.parametrize('p', [0.0, 0.1, 0.5, 0.9, 1.0])
@pytest.mark.parametrize('exo', [0.0, 1.0, 20.0])
def test_mec_instantiations_sanity(p, exo):
    model = build_mec_shs(Policy(p, 0.3, 1.0), 2.5, EsEnvironment.finite(exo, 10.0))
    solution = solve(model)
    assert (solution.pi.probs >= 0).all()
    assert solution.pi.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert balance_residual(model, solution.pi) <= 1e-10
    assert correlation_residual(model, solution.pi, solution.v) <= 1e-10
    assert (solution.v.v >= 0).all()
    assert np.isfinite(solution.delta) and solution.delta > 0


def test_model_round_trips_through_dict(gallery):
    model = gallery['mm1_lcfs_idle']
    assert ShsModel.from_dict(model.to_dict()) == model


def test_malformed_document_is_invalid_params():
    with pytest.raises(InvalidParams):
        ShsModel.from_dict({'num_states': 1, 'transitions': []})


@pytest.mark.slow
def test_stationary_matches_occupancy_simulation(base_policy, base_env):
    model = build_mec_shs(base_policy, 2.5, base_env)
    pi = solve_stationary(model).probs
    occupancy = simulate_occupancy(model, horizon=2e5, seed=7)
    assert occupancy == pytest.approx(pi, abs=5e-3)


def test_closed_class_unreachable_from_initial_state_is_ignored():
    model = chain(4, [(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)])
    assert validate_model(model).ok
    assert solve_stationary(model).probs == pytest.approx([0.5, 0.5, 0.0, 0.0], abs=1e-12)


def test_local_only_device_without_exogenous_traffic_solves():
    # the ES-busy-with-exogenous state only loops to itself and is never entered
    model = build_mec_shs(Policy(1.0, 0.3, 1.0), 2.5, EsEnvironment.finite(0.0, 10.0))
    assert validate_model(model).ok
    assert solve(model).delta == pytest.approx(1 / 2.5 + 1 / 0.3, rel=1e-10)
