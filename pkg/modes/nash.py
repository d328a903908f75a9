import logging

from mecaoi.errors import NonConvergence
from mecaoi.finite_game import (
    best_response_dynamics,
    device_costs,
    exploitability_ladder,
    symmetric_profile,
    write_exploitability_csv,
)
from mecaoi.mfe_solver import solve_mfe
from mecaoi.results import write_csv

logger = logging.getLogger('mecaoi.modes.nash')


class Nash:
    """Best-response dynamics in the N-device game, optionally MFE exploitability"""
    name = 'nash'

    def run(self, exp):
        types = exp.types
        start = [exp.policy.clamped(params) for params in types.types]
        initial, type_of = symmetric_profile(start, types, exp.N, exp.mu3)
        params_list = [types.types[t] for t in type_of]

        result = best_response_dynamics(
            initial, params_list, exp.opt, int(exp.nash.get('max_sweeps', 50)), exp.cost_pairing
        )
        costs = device_costs(result.profile, params_list, exp.cost_pairing)
        rows = [
            [i, params_list[i].type_id, policy.p_local, policy.mu_local, policy.mu_tx, cost]
            for i, (policy, cost) in enumerate(zip(result.profile.policies, costs))
        ]
        written = [write_csv(exp.output / 'nash.csv',
                             ['device', 'type_id', 'p_local', 'mu_local', 'mu_tx', 'cost'], rows)]

        failures = []
        if not result.converged:
            failures.append(f"best-response dynamics did not converge in {result.sweeps} sweeps")

        ladder = [int(n) for n in exp.nash.get('exploitability_N') or []]
        if ladder:
            eq = solve_mfe(types, exp.mu3, exp.opt, exp.algo, exp.cost_pairing)
            if not eq.converged:
                failures.append(f"MFE did not converge (residual {eq.residual:.3e})")
            reports = exploitability_ladder(eq, types, ladder, exp.opt, exp.mu3, exp.cost_pairing)
            written.append(write_exploitability_csv(reports, exp.output / 'exploitability.csv'))

        if failures:
            raise NonConvergence('; '.join(failures))
        return written


def setup(harness):
    harness.add_mode(Nash())
