"""Parameter sweeps: best policy over rho, or one MFE per value of any other axis."""
import logging
from concurrent.futures import ProcessPoolExecutor

from mecaoi.config import apply_axis, build_experiment
from mecaoi.errors import InvalidConfig, NonConvergence
from mecaoi.mec_model import tx_throughput
from mecaoi.mfe_solver import best_response_curve, solve_mfe
from mecaoi.results import write_csv

logger = logging.getLogger('mecaoi.modes.sweep')

BEST_POLICY_COLUMNS = ['rho', 'p_opt', 'mu_local_opt', 'mu_tx_opt', 'cost', 'aoi']
MFE_COLUMNS = ['p_mfe', 'mu_local_mfe', 'mu_tx_mfe', 'rho_mfe', 'throughput', 'converged', 'iterations', 'type_id']


def _map(fn, jobs, workers):
    """Map over grid points, results in grid order"""
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]


def _best_point(job):
    params, rho, opt, pairing = job
    return best_response_curve(params, [rho], opt, pairing)[0]


def _mfe_point(job):
    mode, raw, axis, value = job
    # points already run in parallel; keep each solve single-process
    exp = build_experiment(mode, {**apply_axis(raw, axis, value), 'workers': 1})
    eq = solve_mfe(exp.types, exp.mu3, exp.opt, exp.algo, exp.cost_pairing)
    # one row per device type; throughput is that type's transmitter departure rate
    return [
        [value, policy.p_local, policy.mu_local, policy.mu_tx, eq.rho,
         tx_throughput(policy, params.arrival_rate), eq.converged, eq.iterations, params.type_id]
        for policy, params in zip(eq.policies, exp.types.types)
    ]


def mfe_sweep(exp, filename):
    """One MFE per value of the sweep axis; raises NonConvergence after writing if any point failed"""
    sweep = exp.sweep
    logger.info(f"MFE sweep over {sweep.axis}: {len(sweep.values)} points")
    jobs = [(exp.mode, exp.raw, sweep.axis, value) for value in sweep.values]
    rows = [row for point in _map(_mfe_point, jobs, exp.workers) for row in point]
    path = write_csv(exp.output / filename, [sweep.axis] + MFE_COLUMNS, rows)
    failed = sorted({row[0] for row in rows if not row[6]})
    if failed:
        raise NonConvergence(f"MFE did not converge at {sweep.axis} = {failed}")
    return path


class Sweep:
    name = 'sweep'

    def run(self, exp):
        if exp.sweep is None:
            raise InvalidConfig("sweep mode needs a 'sweep' section")
        if exp.sweep.target == 'mfe':
            return [mfe_sweep(exp, 'sweep.csv')]

        jobs = [(exp.params, float(rho), exp.opt, exp.cost_pairing) for rho in exp.sweep.values]
        points = _map(_best_point, jobs, exp.workers)
        rows = [[point[c] for c in BEST_POLICY_COLUMNS] for point in points]
        logger.info(f"Best policy computed at {len(rows)} loads")
        return [write_csv(exp.output / 'sweep.csv', BEST_POLICY_COLUMNS, rows)]


def setup(harness):
    harness.add_mode(Sweep())
