import logging

from mecaoi.errors import NonConvergence
from mecaoi.mfe_solver import solve_mfe, write_iteration_log
from mecaoi.results import write_json
from modes.sweep import mfe_sweep

logger = logging.getLogger('mecaoi.modes.mfe')


class Mfe:
    name = 'mfe'

    def run(self, exp):
        if exp.sweep is not None and exp.sweep.axis != 'rho':
            return [mfe_sweep(exp, 'mfe_sweep.csv')]

        eq = solve_mfe(exp.types, exp.mu3, exp.opt, exp.algo, exp.cost_pairing)
        summary = eq.to_dict()
        summary['type_ids'] = [t.type_id for t in exp.types.types]
        summary['weights'] = list(exp.types.weights)
        written = [
            write_iteration_log(eq, exp.output / 'mfe_iterations.csv'),
            write_json(exp.output / 'equilibrium.json', summary),
        ]
        if not eq.converged:
            raise NonConvergence(
                f"MFE iteration stopped after {eq.iterations} iterations with residual {eq.residual:.3e}"
            )
        return written


def setup(harness):
    harness.add_mode(Mfe())
