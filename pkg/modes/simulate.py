import logging

from mecaoi.des_sim import simulate_device, simulate_population
from mecaoi.finite_game import symmetric_profile
from mecaoi.mec_model import EsEnvironment, SystemParams, device_aoi, finite_n_aoi
from mecaoi.results import write_csv

logger = logging.getLogger('mecaoi.modes.simulate')

COLUMNS = ['scope', 'device', 'mean', 'ci_half_width', 'events', 'analytic', 'rel_gap']


def _row(scope, device, estimate, analytic):
    gap = (estimate.mean - analytic) / analytic
    return [scope, device, estimate.mean, estimate.ci_half_width, estimate.events, analytic, gap]


class Simulate:
    """DES estimates next to the SHS values they should match"""
    name = 'simulate'

    def run(self, exp):
        params = exp.params
        policy = exp.policy
        sys = SystemParams(N=exp.N, mu3_per_capita=exp.mu3)
        # a single tagged device; the rest of the ES load arrives as Poisson traffic at rate rho * N * mu3
        env = EsEnvironment(exo_rate=exp.rho * sys.es_rate, es_rate=sys.es_rate, rho=exp.rho)
        estimate = simulate_device(policy, params.arrival_rate, env, exp.sim)
        rows = [_row('device', 0, estimate, device_aoi(policy, params.arrival_rate, env))]
        logger.info(f"Tagged device: AoI {estimate.mean:.6f} +/- {estimate.ci_half_width:.6f}")

        if exp.N > 1:
            profile, _ = symmetric_profile([policy] * len(exp.types.types), exp.types, exp.N, exp.mu3)
            estimates = simulate_population(profile.policies, profile.lambdas, sys, exp.sim)
            population = [
                _row('population', i, est, finite_n_aoi(profile.policies, profile.lambdas, i, sys))
                for i, est in enumerate(estimates)
            ]
            gaps = [row[6] for row in population]
            # the exponential exogenous-traffic approximation is only claimed for large arrival rates
            logger.info(f"Population of {exp.N}: relative gap to the analytic age "
                        f"from {min(gaps):+.3%} to {max(gaps):+.3%}")
            rows += population
        return [write_csv(exp.output / 'simulate.csv', COLUMNS, rows)]


def setup(harness):
    harness.add_mode(Simulate())
