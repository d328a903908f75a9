"""MEC offloading network: policies, the 8-state SHS, AoI formulas and device cost.

Server naming follows the transition table: server 1 is the transmitter
(rate mu_tx), server 2 is the local processor (rate mu_local), server 3 is
the edge server (ES).  Age components: 0 device, 1 transmitter, 2 local
processor, 3 ES.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np

from . import shs_engine
from .errors import InvalidParams
from .shs_engine import ZERO, ShsModel, Transition

logger = logging.getLogger('mecaoi.mec_model')

RATE_MIN = 1e-3
COST_PAIRINGS = ('physical', 'literal')

# ES service rate used to emulate the mean-field limit with the SHS engine
MEAN_FIELD_ES_RATE = 1e6

Z = ZERO

# (source, rate label, target, reset map) per row of the transition table.
# Labels: lp = lambda*p, lq = lambda*(1-p), le = exogenous, tx = mu_tx,
# loc = mu_local, es = ES rate.
MEC_TRANSITIONS = (
    (0, 'lp', 2, (0, 1, Z, 3)),
    (0, 'lq', 0, (0, Z, 2, 3)),
    (0, 'le', 6, (0, 1, 2, 0)),
    (0, 'tx', 4, (0, Z, 2, 1)),
    (0, 'loc', 0, (2, 1, 2, 2)),
    (0, 'es', 0, (3, 1, 2, 3)),

    (1, 'lp', 2, (0, 1, Z, 3)),
    (1, 'lq', 1, (0, Z, 2, 3)),
    (1, 'le', 6, (0, 1, 2, 0)),
    (1, 'tx', 4, (0, Z, 2, 1)),
    (1, 'loc', 1, (2, 1, 2, 3)),
    (1, 'es', 1, (3, 1, 3, 3)),

    (2, 'lp', 2, (0, 1, Z, 3)),
    (2, 'lq', 0, (0, Z, 2, 3)),
    (2, 'le', 7, (0, 1, 2, 0)),
    (2, 'tx', 3, (0, Z, 2, 1)),
    (2, 'loc', 2, (2, 2, 2, 2)),
    (2, 'es', 2, (3, 1, 2, 3)),

    (3, 'lp', 3, (0, Z, Z, 3)),
    (3, 'lq', 0, (0, Z, 2, 3)),
    (3, 'le', 5, (0, Z, 2, 0)),
    (3, 'loc', 3, (2, Z, 2, 2)),
    (3, 'es', 3, (3, Z, 2, 3)),

    (4, 'lp', 3, (0, Z, Z, 3)),
    (4, 'lq', 1, (0, Z, 2, 3)),
    (4, 'le', 5, (0, Z, 2, 0)),
    (4, 'loc', 4, (2, Z, 2, 3)),
    (4, 'es', 4, (3, Z, 3, 3)),

    (5, 'lp', 5, (0, Z, Z, 3)),
    (5, 'lq', 6, (0, Z, 2, 3)),
    (5, 'le', 5, (0, Z, 2, 0)),
    (5, 'loc', 5, (2, Z, 2, 2)),
    (5, 'es', 5, (3, Z, 2, 3)),

    (6, 'lp', 7, (0, 1, Z, 3)),
    (6, 'lq', 6, (0, Z, 2, 3)),
    (6, 'le', 6, (0, 1, 2, 0)),
    (6, 'tx', 4, (0, Z, 2, 1)),
    (6, 'loc', 6, (2, 1, 2, 2)),
    (6, 'es', 6, (3, 1, 2, 3)),

    (7, 'lp', 7, (0, 1, Z, 3)),
    (7, 'lq', 6, (0, Z, 2, 3)),
    (7, 'le', 7, (0, 1, 2, 0)),
    (7, 'tx', 3, (0, Z, 2, 1)),
    (7, 'loc', 7, (2, 2, 2, 2)),
    (7, 'es', 7, (3, 1, 2, 3)),
)

# the transmitter precedes the exogenous merge point, so it cannot be kept
# busy with fake updates: its age freezes while it is idle (states 3..5)
MEC_GROWTH = (
    (1, 1, 1, 1),
    (1, 1, 1, 1),
    (1, 1, 1, 1),
    (1, 0, 1, 1),
    (1, 0, 1, 1),
    (1, 0, 1, 1),
    (1, 1, 1, 1),
    (1, 1, 1, 1),
)


@dataclass(frozen=True)
class Policy:
    p_local: float
    mu_local: float
    mu_tx: float

    def clamped(self, params):
        """Project onto the feasible box of a device"""
        return Policy(
            p_local=float(np.clip(self.p_local, 0.0, 1.0)),
            mu_local=float(np.clip(self.mu_local, RATE_MIN, max(params.f_max, RATE_MIN))),
            mu_tx=float(np.clip(self.mu_tx, RATE_MIN, max(params.P_max, RATE_MIN))),
        )

    def is_feasible(self, params, tol=1e-12):
        return (
            -tol <= self.p_local <= 1.0 + tol
            and RATE_MIN - tol <= self.mu_local <= max(params.f_max, RATE_MIN) + tol
            and RATE_MIN - tol <= self.mu_tx <= max(params.P_max, RATE_MIN) + tol
        )

    def as_array(self):
        return np.array([self.p_local, self.mu_local, self.mu_tx])

    @classmethod
    def from_array(cls, x):
        return cls(p_local=float(x[0]), mu_local=float(x[1]), mu_tx=float(x[2]))

    def to_dict(self):
        return {'p_local': self.p_local, 'mu_local': self.mu_local, 'mu_tx': self.mu_tx}


@dataclass(frozen=True)
class DeviceParams:
    arrival_rate: float
    eta: float
    V: float
    P_max: float
    f_max: float
    type_id: str = 'generic'

    def __post_init__(self):
        if not self.arrival_rate > 0:
            raise InvalidParams(f"arrival_rate must be positive (got {self.arrival_rate})")
        if not self.eta > 0:
            raise InvalidParams(f"eta must be positive (got {self.eta})")
        if self.V < 0:
            raise InvalidParams(f"V must be nonnegative (got {self.V})")
        if not (self.P_max > 0 and self.f_max > 0):
            raise InvalidParams(f"rate caps must be positive (got P_max={self.P_max}, f_max={self.f_max})")

    def with_rate(self, arrival_rate):
        return replace(self, arrival_rate=arrival_rate)


@dataclass(frozen=True)
class SystemParams:
    N: int
    mu3_per_capita: float

    def __post_init__(self):
        if self.N < 1:
            raise InvalidParams(f"N must be at least 1 (got {self.N})")
        if not self.mu3_per_capita > 0:
            raise InvalidParams(f"mu3 must be positive (got {self.mu3_per_capita})")

    @property
    def es_rate(self):
        return self.N * self.mu3_per_capita


@dataclass(frozen=True)
class EsEnvironment:
    exo_rate: float
    es_rate: float
    rho: float = 0.0

    @classmethod
    def mean_field(cls, rho, es_rate=MEAN_FIELD_ES_RATE):
        """Large-ES environment whose load equals rho"""
        return cls(exo_rate=rho * es_rate, es_rate=es_rate, rho=rho)

    @classmethod
    def finite(cls, exo_rate, es_rate):
        return cls(exo_rate=exo_rate, es_rate=es_rate, rho=exo_rate / es_rate)


def _check_rates(**rates):
    for name, value in rates.items():
        if not np.isfinite(value) or value < 0:
            raise InvalidParams(f"{name} must be a nonnegative rate (got {value})")


def build_mec_shs(policy, lam, env):
    """The 8-state, 45-transition SHS of one device facing exogenous ES traffic"""
    _check_rates(arrival_rate=lam, p_local=policy.p_local, mu_local=policy.mu_local,
                 mu_tx=policy.mu_tx, exo_rate=env.exo_rate, es_rate=env.es_rate)
    if policy.p_local > 1.0:
        raise InvalidParams(f"p_local must lie in [0, 1] (got {policy.p_local})")
    p = policy.p_local
    rates = {
        'lp': lam * p,
        'lq': lam * (1.0 - p),
        'le': env.exo_rate,
        'tx': policy.mu_tx,
        'loc': policy.mu_local,
        'es': env.es_rate,
    }
    transitions = [
        Transition(source, target, rates[label], reset)
        for source, label, target, reset in MEC_TRANSITIONS
    ]
    return ShsModel(num_states=8, num_ages=4, transitions=transitions, growth=MEC_GROWTH)


def tx_throughput(policy, lam):
    """Departure rate of a single-buffer LCFS-P transmitter"""
    offered = lam * (1.0 - policy.p_local)
    if offered <= 0.0:
        return 0.0
    return offered * policy.mu_tx / (offered + policy.mu_tx)


def exogenous_rate(policies, lambdas, i):
    """Aggregate ES arrival rate seen by device i from every other transmitter"""
    return float(sum(
        tx_throughput(policy, lam)
        for j, (policy, lam) in enumerate(zip(policies, lambdas))
        if j != i
    ))


def finite_n_aoi(policies, lambdas, i, sys):
    """Average AoI of device i in the N-device system"""
    if len(policies) != sys.N or len(lambdas) != sys.N:
        raise InvalidParams(f"expected {sys.N} policies and rates, got {len(policies)} and {len(lambdas)}")
    if not 0 <= i < sys.N:
        raise InvalidParams(f"device index {i} out of range for N={sys.N}")
    env = EsEnvironment.finite(exogenous_rate(policies, lambdas, i), sys.es_rate)
    return device_aoi(policies[i], lambdas[i], env)


def device_aoi(policy, lam, env):
    """Average AoI of one device via the SHS engine"""
    return shs_engine.solve(build_mec_shs(policy, lam, env)).delta


def mf_aoi_closed_form(policy, lam, rho):
    """Mean-field average AoI of a generic device at ES load rho"""
    if not lam > 0:
        raise InvalidParams(f"arrival_rate must be positive (got {lam})")
    if rho < 0:
        raise InvalidParams(f"rho must be nonnegative (got {rho})")
    return float(_mf_aoi(policy.p_local, policy.mu_local, policy.mu_tx, lam, rho))


def _mf_aoi(p, ml, mt, lam, rho):
    q = 1.0 - p
    r1 = 1.0 + rho

    m1 = r1 * p * q
    m2 = ml * r1 + mt * (1.0 + (2.0 - p) * p * rho)
    m3 = r1 * (mt + ml) ** 2 - mt ** 2 * q * rho

    numerator = lam ** 3 * m1 + lam ** 2 * m2 + lam * m3 + mt * ml * (mt + ml) * r1
    denominator = (mt + lam * p * r1 + mt * p * rho) * (ml * (mt + ml) * r1 + lam * q * (mt + ml * r1))
    return r1 / lam * numerator / denominator


def busy_fractions(policy, lam):
    """Long-run busy fractions (t_local, t_tx) of the two device servers"""
    return _busy(policy.p_local, policy.mu_local, policy.mu_tx, lam)


def _busy(p, ml, mt, lam):
    local_load = lam * p
    tx_load = lam * (1.0 - p)
    return local_load / (local_load + ml), tx_load / (tx_load + mt)


def device_cost(policy, params, delta, pairing='physical'):
    """Power spent on both servers plus the weighted average AoI"""
    if pairing not in COST_PAIRINGS:
        raise InvalidParams(f"cost_pairing must be one of {COST_PAIRINGS} (got {pairing!r})")
    t_local, t_tx = busy_fractions(policy, params.arrival_rate)
    if pairing == 'physical':
        power = t_tx * policy.mu_tx + t_local * params.eta * policy.mu_local ** 3
    else:
        power = t_local * policy.mu_tx + t_tx * params.eta * policy.mu_local ** 3
    return float(power + params.V * delta)


def mf_cost(policy, params, rho, pairing='physical'):
    """Generic-device cost at mean ES load rho"""
    delta = mf_aoi_closed_form(policy, params.arrival_rate, rho)
    return device_cost(policy, params, delta, pairing)


def finite_cost(i, policies, params_list, sys, pairing='physical'):
    """Cost of device i in the N-device game"""
    lambdas = [params.arrival_rate for params in params_list]
    delta = finite_n_aoi(policies, lambdas, i, sys)
    return device_cost(policies[i], params_list[i], delta, pairing)


def mf_cost_array(params, rho, p, mu_local, mu_tx, pairing='physical'):
    """Vectorized generic-device cost over arrays of policy coordinates"""
    if pairing not in COST_PAIRINGS:
        raise InvalidParams(f"cost_pairing must be one of {COST_PAIRINGS} (got {pairing!r})")
    lam = params.arrival_rate
    t_local, t_tx = _busy(p, mu_local, mu_tx, lam)
    if pairing == 'physical':
        power = t_tx * mu_tx + t_local * params.eta * mu_local ** 3
    else:
        power = t_local * mu_tx + t_tx * params.eta * mu_local ** 3
    return power + params.V * _mf_aoi(p, mu_local, mu_tx, lam, rho)
