import logging

from mecaoi.finite_game import symmetric_profile
from mecaoi.mec_model import EsEnvironment, device_aoi, finite_n_aoi, mf_aoi_closed_form
from mecaoi.results import write_csv

logger = logging.getLogger('mecaoi.modes.aoi')


class Aoi:
    """Closed-form and SHS average AoI side by side"""
    name = 'aoi'

    def run(self, exp):
        params = exp.params
        policy = exp.policy
        if exp.sweep is not None and exp.sweep.axis == 'rho':
            rhos = [float(r) for r in exp.sweep.values]
        else:
            rhos = [exp.rho]

        rows = []
        for rho in rhos:
            closed = mf_aoi_closed_form(policy, params.arrival_rate, rho)
            shs = device_aoi(policy, params.arrival_rate, EsEnvironment.mean_field(rho))
            rows.append([rho, closed, shs, abs(shs - closed) / closed])
            logger.debug(f"rho={rho}: closed form {closed:.6f}, SHS {shs:.6f}")
        written = [write_csv(exp.output / 'aoi.csv', ['rho', 'aoi_closed_form', 'aoi_shs', 'rel_diff'], rows)]

        if exp.N > 1:
            profile, type_of = symmetric_profile([policy] * len(exp.types.types), exp.types, exp.N, exp.mu3)
            finite_rows = [
                [i, exp.types.types[t].type_id, profile.exo_rate(i),
                 finite_n_aoi(profile.policies, profile.lambdas, i, profile.sys)]
                for i, t in enumerate(type_of)
            ]
            written.append(write_csv(exp.output / 'aoi_finite.csv', ['device', 'type_id', 'exo_rate', 'aoi'], finite_rows))
        return written


def setup(harness):
    harness.add_mode(Aoi())
