"""Mean-field equilibrium of the offloading game.

For a fixed ES load rho every type solves its own cost minimization (the
optimality map); the resulting transmitter throughputs regenerate rho (the
consistency map).  `solve_mfe` iterates the damped composition until the
load stops moving.
"""
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import InvalidConfig, InvalidParams, SingularSystem
from .mec_model import (
    RATE_MIN,
    Policy,
    mf_aoi_closed_form,
    mf_cost,
    mf_cost_array,
    tx_throughput,
)
from .results import write_csv

logger = logging.getLogger('mecaoi.mfe_solver')


@dataclass(frozen=True)
class TypeSet:
    types: tuple
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, 'types', tuple(self.types))
        object.__setattr__(self, 'weights', tuple(float(w) for w in self.weights))
        if not self.types or len(self.types) != len(self.weights):
            raise InvalidParams(f"need one weight per type (got {len(self.types)} types, {len(self.weights)} weights)")
        if any(w < 0 for w in self.weights):
            raise InvalidParams(f"type weights must be nonnegative (got {self.weights})")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise InvalidParams(f"type weights must sum to 1 (got {sum(self.weights)})")

    @classmethod
    def normalized(cls, types, weights):
        total = float(sum(weights))
        if not total > 0:
            raise InvalidParams("type weights must have a positive sum")
        return cls(types, [w / total for w in weights])

    @classmethod
    def single(cls, params):
        return cls([params], [1.0])

    def mean_arrival_rate(self):
        return sum(w * t.arrival_rate for t, w in zip(self.types, self.weights))


@dataclass(frozen=True)
class OptConfig:
    grid_points_per_axis: int = 7
    refine_tolerance: float = 1e-8
    max_refine_iters: int = 4000
    starts: int = 3

    def validate(self):
        if self.grid_points_per_axis < 3:
            raise InvalidConfig(f"grid_points_per_axis must be at least 3 (got {self.grid_points_per_axis})")
        if not self.refine_tolerance > 0:
            raise InvalidConfig(f"refine_tolerance must be positive (got {self.refine_tolerance})")
        if self.max_refine_iters < 1 or self.starts < 1:
            raise InvalidConfig("max_refine_iters and starts must be positive")


@dataclass(frozen=True)
class AlgoConfig:
    gamma: float = 0.5
    epsilon: float = 1e-6
    max_iters: int = 500
    rho0: float = 0.0
    oscillation_window: int = 50
    workers: int = 1

    def validate(self):
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidConfig(f"gamma must lie in (0, 1] (got {self.gamma})")
        if not self.epsilon > 0:
            raise InvalidConfig(f"epsilon must be positive (got {self.epsilon})")
        if self.max_iters < 1:
            raise InvalidConfig(f"max_iters must be at least 1 (got {self.max_iters})")
        if self.rho0 < 0:
            raise InvalidConfig(f"rho0 must be nonnegative (got {self.rho0})")


@dataclass
class MfEquilibrium:
    policies: tuple
    rho: float
    residual: float
    iterations: int
    converged: bool
    consistency_residual: float = float('nan')
    gamma: float = 0.5
    history: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            'policies': [p.to_dict() for p in self.policies],
            'rho': self.rho,
            'residual': self.residual,
            'iterations': self.iterations,
            'converged': self.converged,
            'consistency_residual': self.consistency_residual,
            'gamma': self.gamma,
        }


def policy_bounds(params):
    lower = np.array([0.0, RATE_MIN, RATE_MIN])
    upper = np.array([1.0, max(params.f_max, RATE_MIN), max(params.P_max, RATE_MIN)])
    return lower, upper


def _safe(objective, x):
    try:
        value = objective(x)
    except (SingularSystem, ZeroDivisionError, FloatingPointError):
        return np.inf
    return float(value) if np.isfinite(value) else np.inf


def minimize_policy(objective, params, cfg, batch_objective=None, extra_starts=()):
    """Multi-start minimization over the feasible policy box.

    A coarse grid is scored first; bounded Nelder-Mead then refines from the
    `cfg.starts` best grid points (plus any `extra_starts`).  The returned
    point is never worse than the best grid point.
    """
    lower, upper = policy_bounds(params)
    axes = [np.linspace(lo, hi, cfg.grid_points_per_axis) for lo, hi in zip(lower, upper)]
    grid = np.array(list(itertools.product(*axes)))
    if batch_objective is not None:
        values = np.asarray(batch_objective(grid), dtype=float)
        values = np.where(np.isfinite(values), values, np.inf)
    else:
        values = np.array([_safe(objective, x) for x in grid])

    order = np.argsort(values, kind='stable')
    best_x, best_f = grid[order[0]].copy(), values[order[0]]
    starts = [grid[k] for k in order[:cfg.starts]]
    for start in extra_starts:
        x = np.clip(start.as_array(), lower, upper)
        f = _safe(objective, x)
        if f < best_f:
            best_x, best_f = x, f
        starts.append(x)

    free = upper - lower > 1e-15
    if not free.any():
        return Policy.from_array(best_x), float(best_f)
    step = (upper - lower) / (cfg.grid_points_per_axis - 1) / 2

    for x0 in starts:
        def reduced(z, x0=x0):
            x = x0.copy()
            x[free] = z
            return _safe(objective, x)

        z0 = x0[free]
        simplex = [z0]
        for axis, (s, lo, hi) in enumerate(zip(step[free], lower[free], upper[free])):
            vertex = z0.copy()
            vertex[axis] = z0[axis] + s if z0[axis] + s <= hi else z0[axis] - s
            simplex.append(np.clip(vertex, lo, hi))
        result = optimize.minimize(
            reduced,
            z0,
            method='Nelder-Mead',
            bounds=list(zip(lower[free], upper[free])),
            options={
                'xatol': cfg.refine_tolerance,
                'fatol': cfg.refine_tolerance,
                'maxiter': cfg.max_refine_iters,
                'initial_simplex': np.array(simplex),
            },
        )
        x = x0.copy()
        x[free] = np.clip(result.x, lower[free], upper[free])
        f = _safe(objective, x)
        if f < best_f:
            best_x, best_f = x, f

    return Policy.from_array(best_x), float(best_f)


def best_policy(params, rho, cfg=None, pairing='physical'):
    """Cost-minimizing policy of a generic device at ES load rho"""
    cfg = cfg or OptConfig()
    if rho < 0:
        raise InvalidParams(f"rho must be nonnegative (got {rho})")
    policy, _ = minimize_policy(
        lambda x: mf_cost(Policy.from_array(x), params, rho, pairing),
        params,
        cfg,
        batch_objective=lambda grid: mf_cost_array(params, rho, grid[:, 0], grid[:, 1], grid[:, 2], pairing),
    )
    return policy


def best_response_curve(params, rhos, cfg=None, pairing='physical'):
    """Best policy, its cost and AoI for each load in rhos"""
    rows = []
    for rho in rhos:
        policy = best_policy(params, rho, cfg, pairing)
        rows.append({
            'rho': float(rho),
            'p_opt': policy.p_local,
            'mu_local_opt': policy.mu_local,
            'mu_tx_opt': policy.mu_tx,
            'cost': mf_cost(policy, params, rho, pairing),
            'aoi': mf_aoi_closed_form(policy, params.arrival_rate, rho),
        })
    return rows


def consistency_map(policies, types, mu3):
    """ES load regenerated by the population when each type plays its policy"""
    load = sum(
        w * tx_throughput(policy, params.arrival_rate)
        for policy, params, w in zip(policies, types.types, types.weights)
    )
    return float(load / mu3)


def _respond(job):
    best_response, params, rho, opt, pairing = job
    return best_response(params, rho, opt, pairing)


def _respond_all(best_response, types, rho, opt, pairing, workers):
    jobs = [(best_response, params, rho, opt, pairing) for params in types.types]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return tuple(pool.map(_respond, jobs))
    return tuple(_respond(job) for job in jobs)


def solve_mfe(types, mu3, opt=None, algo=None, pairing='physical', best_response=best_policy):
    """Damped fixed-point iteration on the ES load"""
    opt = opt or OptConfig()
    algo = algo or AlgoConfig()
    opt.validate()
    algo.validate()
    if not mu3 > 0:
        raise InvalidParams(f"mu3 must be positive (got {mu3})")

    rho = algo.rho0
    gamma = algo.gamma
    budget = algo.max_iters
    halved = False
    converged = False
    residual = np.inf
    residuals = []
    history = []
    k = 0

    while k < budget:
        k += 1
        policies = _respond_all(best_response, types, rho, opt, pairing, algo.workers)
        target = consistency_map(policies, types, mu3)
        new_rho = (1.0 - gamma) * rho + gamma * target
        residual = abs(new_rho - rho)
        history.append({
            'k': k,
            'rho_prev': rho,
            'rho': new_rho,
            'target': target,
            'residual': residual,
            'gamma': gamma,
            'policies': policies,
            'costs': [mf_cost(pol, params, rho, pairing) for pol, params in zip(policies, types.types)],
        })
        logger.debug(f"iteration {k}: rho={new_rho:.8f} residual={residual:.3e}")
        rho = new_rho
        residuals.append(residual)
        if residual < algo.epsilon:
            converged = True
            break

        window = residuals[-algo.oscillation_window:]
        oscillating = len(window) == algo.oscillation_window and np.any(np.diff(window) > 0)
        if not halved and (oscillating or k == budget):
            gamma /= 2.0
            halved = True
            if k == budget:
                budget += algo.max_iters
            logger.warning(f"Fixed-point iteration {'oscillates' if oscillating else 'hit max_iters'}; "
                           f"halving gamma to {gamma}")

    policies = _respond_all(best_response, types, rho, opt, pairing, algo.workers)
    consistency_residual = abs(rho - consistency_map(policies, types, mu3))
    if converged:
        logger.info(f"MFE converged after {k} iterations: rho={rho:.8f}")
    else:
        logger.warning(f"MFE did not converge after {k} iterations (residual {residual:.3e})")
    return MfEquilibrium(
        policies=policies,
        rho=float(rho),
        residual=float(residual),
        iterations=k,
        converged=converged,
        consistency_residual=float(consistency_residual),
        gamma=gamma,
        history=history,
    )


def iteration_log_rows(eq):
    n_types = len(eq.policies)
    header = ['k', 'rho', 'residual', 'gamma']
    for t in range(n_types):
        header += [f'p_{t}', f'mu_local_{t}', f'mu_tx_{t}', f'cost_{t}']
    rows = []
    for row in eq.history:
        line = [row['k'], row['rho'], row['residual'], row['gamma']]
        for policy, cost in zip(row['policies'], row['costs']):
            line += [policy.p_local, policy.mu_local, policy.mu_tx, cost]
        rows.append(line)
    return header, rows


def write_iteration_log(eq, path):
    header, rows = iteration_log_rows(eq)
    return write_csv(path, header, rows)
