"""Finite-N offloading game: best responses, best-response dynamics, exploitability."""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParams
from .mec_model import (
    EsEnvironment,
    Policy,
    SystemParams,
    device_aoi,
    device_cost,
    exogenous_rate,
)
from .mfe_solver import OptConfig, minimize_policy
from .results import write_csv

logger = logging.getLogger('mecaoi.finite_game')


@dataclass(frozen=True)
class Profile:
    policies: tuple
    lambdas: tuple
    sys: SystemParams

    def __post_init__(self):
        object.__setattr__(self, 'policies', tuple(self.policies))
        object.__setattr__(self, 'lambdas', tuple(float(lam) for lam in self.lambdas))
        if len(self.policies) != self.sys.N or len(self.lambdas) != self.sys.N:
            raise InvalidParams(
                f"profile needs {self.sys.N} policies and rates "
                f"(got {len(self.policies)} and {len(self.lambdas)})"
            )

    def exo_rate(self, i):
        return exogenous_rate(self.policies, self.lambdas, i)

    def with_policy(self, i, policy):
        policies = list(self.policies)
        policies[i] = policy
        return replace(self, policies=policies)


@dataclass
class ExploitabilityReport:
    N: int
    per_device_gain: tuple
    max_gain: float
    mean_gain: float


@dataclass
class BrdResult:
    profile: Profile
    converged: bool
    sweeps: int
    max_changes: list = field(default_factory=list)


def _cost_against(policy, params, env, pairing):
    return device_cost(policy, params, device_aoi(policy, params.arrival_rate, env), pairing)


def _respond_to(exo, params, sys, cfg, pairing, incumbent=None):
    env = EsEnvironment.finite(exo, sys.es_rate)
    return minimize_policy(
        lambda x: _cost_against(Policy.from_array(x), params, env, pairing),
        params,
        cfg,
        extra_starts=(incumbent,) if incumbent is not None else (),
    )


def best_response(i, profile, params, cfg=None, pairing='physical'):
    """Cost-minimizing policy of device i with everyone else held fixed"""
    cfg = cfg or OptConfig()
    if not 0 <= i < profile.sys.N:
        raise InvalidParams(f"device index {i} out of range for N={profile.sys.N}")
    policy, _ = _respond_to(profile.exo_rate(i), params, profile.sys, cfg, pairing, profile.policies[i])
    return policy


def device_costs(profile, params_list, pairing='physical'):
    """J_{N,i} of every device under the profile"""
    return [
        _cost_against(
            profile.policies[i],
            params_list[i],
            EsEnvironment.finite(profile.exo_rate(i), profile.sys.es_rate),
            pairing,
        )
        for i in range(profile.sys.N)
    ]


def best_response_dynamics(initial, params_list, cfg=None, max_sweeps=50, pairing='physical'):
    """Gauss-Seidel sweeps of best responses in fixed device order"""
    cfg = cfg or OptConfig()
    n = initial.sys.N
    if len(params_list) != n:
        raise InvalidParams(f"expected {n} device parameter sets (got {len(params_list)})")
    policies = list(initial.policies)
    lambdas = list(initial.lambdas)
    faced = [None] * n
    max_changes = []
    converged = False
    sweep = 0

    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for i in range(n):
            exo = exogenous_rate(policies, lambdas, i)
            new, _ = _respond_to(exo, params_list[i], initial.sys, cfg, pairing, policies[i])
            change = max(change, float(np.max(np.abs(new.as_array() - policies[i].as_array()))))
            policies[i] = new
            faced[i] = exo
        max_changes.append(change)
        drift = max(abs(exogenous_rate(policies, lambdas, i) - faced[i]) for i in range(n))
        logger.debug(f"sweep {sweep}: max policy change {change:.3e}, exogenous drift {drift:.3e}")
        if change < cfg.refine_tolerance or drift <= cfg.refine_tolerance:
            converged = True
            break

    if converged:
        logger.info(f"Best-response dynamics converged after {sweep} sweeps")
    else:
        logger.warning(f"Best-response dynamics stopped after {sweep} sweeps without converging")
    return BrdResult(
        profile=replace(initial, policies=policies),
        converged=converged,
        sweeps=sweep,
        max_changes=max_changes,
    )


def allocate_types(weights, N):
    """Largest-remainder allocation of N devices to types"""
    quotas = np.asarray(weights, dtype=float) * N
    counts = np.floor(quotas).astype(int)
    remainder = N - int(counts.sum())
    order = sorted(range(len(quotas)), key=lambda t: (-(quotas[t] - counts[t]), t))
    for t in order[:remainder]:
        counts[t] += 1
    return [int(c) for c in counts]


def symmetric_profile(policies_by_type, types, N, mu3):
    """N-device profile in which each device plays its type's policy"""
    counts = allocate_types(types.weights, N)
    type_of = [t for t, c in enumerate(counts) for _ in range(c)]
    profile = Profile(
        policies=[policies_by_type[t] for t in type_of],
        lambdas=[types.types[t].arrival_rate for t in type_of],
        sys=SystemParams(N=N, mu3_per_capita=mu3),
    )
    return profile, type_of


def exploitability_of_mfe(mfe, types, N, cfg=None, mu3=1.0, pairing='physical'):
    """Largest unilateral cost reduction available in the N-device system under the MFE policies"""
    cfg = cfg or OptConfig()
    profile, type_of = symmetric_profile(mfe.policies, types, N, mu3)
    # devices of one type face the same exogenous rate, so one best response per type suffices
    gain_by_type = {}
    gains = []
    for i, t in enumerate(type_of):
        if t not in gain_by_type:
            params = types.types[t]
            exo = profile.exo_rate(i)
            incumbent = _cost_against(profile.policies[i], params, EsEnvironment.finite(exo, profile.sys.es_rate), pairing)
            _, br_cost = _respond_to(exo, params, profile.sys, cfg, pairing, profile.policies[i])
            gain_by_type[t] = incumbent - br_cost
        gains.append(gain_by_type[t])
    report = ExploitabilityReport(
        N=N,
        per_device_gain=tuple(gains),
        max_gain=float(max(gains)),
        mean_gain=float(np.mean(gains)),
    )
    logger.info(f"Exploitability at N={N}: max gain {report.max_gain:.3e}")
    return report


def exploitability_ladder(mfe, types, Ns, cfg=None, mu3=1.0, pairing='physical'):
    return [exploitability_of_mfe(mfe, types, N, cfg, mu3, pairing) for N in Ns]


def write_exploitability_csv(reports, path):
    return write_csv(path, ['N', 'max_gain', 'mean_gain'], [[r.N, r.max_gain, r.mean_gain] for r in reports])
