"""Piecewise-linear stochastic hybrid system (SHS) solver for average AoI.

A model is a finite continuous-time Markov chain whose transitions carry a
column-copy reset map on the age vector x = (x_0, ..., x_n).  Between
transitions age component k grows at rate u_s[k] in discrete state s.
Component 0 is the age at the monitor, so the average AoI is sum_s v[s][0].
State 0 is the initial state: states it cannot reach are ignored, and the
chain must have exactly one closed class reachable from it.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import InvalidParams, SingularSystem

logger = logging.getLogger('mecaoi.shs_engine')

# reset-map entry meaning "this age component restarts at 0"
ZERO = 'z'

RATE_EPS = 1e-12
COND_LIMIT = 1e12


@dataclass(frozen=True)
class Transition:
    source: int
    target: int
    rate: float
    reset: tuple

    def __post_init__(self):
        object.__setattr__(self, 'reset', tuple(self.reset))

    def copy_ages(self, vec):
        """Apply the reset map to one age (or correlation) vector"""
        return np.array([0.0 if entry == ZERO else vec[entry] for entry in self.reset])

    def to_dict(self):
        return {
            'source': self.source,
            'target': self.target,
            'rate': self.rate,
            'reset': [entry for entry in self.reset],
        }


@dataclass(frozen=True)
class ShsModel:
    num_states: int
    num_ages: int
    transitions: tuple
    growth: tuple

    def __post_init__(self):
        object.__setattr__(self, 'transitions', tuple(self.transitions))
        object.__setattr__(self, 'growth', tuple(tuple(int(g) for g in row) for row in self.growth))

    @classmethod
    def from_dict(cls, data):
        """Build a model from the gallery JSON schema"""
        try:
            transitions = [
                Transition(
                    source=int(t['source']),
                    target=int(t['target']),
                    rate=float(t['rate']),
                    reset=[ZERO if entry == ZERO else int(entry) for entry in t['reset']],
                )
                for t in data['transitions']
            ]
            return cls(
                num_states=int(data['num_states']),
                num_ages=int(data['num_ages']),
                transitions=transitions,
                growth=data['growth'],
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidParams(f"Malformed SHS model document: {e}") from e

    @classmethod
    def load(cls, path):
        with open(path, 'r') as f:
            return cls.from_dict(json.load(f))

    def to_dict(self):
        return {
            'num_states': self.num_states,
            'num_ages': self.num_ages,
            'growth': [list(row) for row in self.growth],
            'transitions': [t.to_dict() for t in self.transitions],
        }

    def outgoing_rates(self):
        """Per-state total outgoing rate, self-loops included"""
        out = np.zeros(self.num_states)
        for t in self.transitions:
            out[t.source] += t.rate
        return out

    def pruned(self):
        """Drop vanishing transitions (0 <= rate < RATE_EPS); negative rates are kept for validation"""
        kept = [t for t in self.transitions if not (0.0 <= t.rate < RATE_EPS)]
        return ShsModel(self.num_states, self.num_ages, kept, self.growth)

    def scaled(self, factor):
        """Same chain with every rate multiplied by factor"""
        return ShsModel(
            self.num_states,
            self.num_ages,
            [Transition(t.source, t.target, t.rate * factor, t.reset) for t in self.transitions],
            self.growth,
        )

    def relabeled(self, perm):
        """Rename state s to perm[s]"""
        growth = [None] * self.num_states
        for old, new in enumerate(perm):
            growth[new] = self.growth[old]
        return ShsModel(
            self.num_states,
            self.num_ages,
            [Transition(perm[t.source], perm[t.target], t.rate, t.reset) for t in self.transitions],
            growth,
        )


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    def __bool__(self):
        return bool(self.violations)

    @property
    def ok(self):
        return not self.violations


@dataclass(frozen=True)
class StationaryDistribution:
    probs: np.ndarray


@dataclass(frozen=True)
class CorrelationVectors:
    v: np.ndarray


@dataclass(frozen=True)
class AoiSolution:
    pi: StationaryDistribution
    v: CorrelationVectors
    delta: float


def load_gallery(directory):
    """Load every *.json model in a directory, keyed by file stem"""
    gallery = {}
    for path in sorted(Path(directory).glob('*.json')):
        gallery[path.stem] = ShsModel.load(path)
    return gallery


def _closed_classes(model):
    """Closed communicating classes reachable from state 0, the initial state"""
    m = model.num_states
    if not model.transitions:
        return [[s] for s in range(m)]
    src = np.array([t.source for t in model.transitions])
    dst = np.array([t.target for t in model.transitions])
    graph = csr_matrix((np.ones(len(src)), (src, dst)), shape=(m, m))
    _, labels = connected_components(graph, directed=True, connection='strong')
    leaking = set(labels[src[labels[src] != labels[dst]]])
    classes = {}
    for s, label in enumerate(labels):
        if label not in leaking:
            classes.setdefault(label, []).append(s)
    reachable = set(breadth_first_order(graph, 0, directed=True, return_predecessors=False).tolist())
    return [classes[label] for label in sorted(classes) if classes[label][0] in reachable]


def validate_model(model):
    """Collect every structural problem that prevents a unique stationary solution"""
    report = ValidationReport()
    m, n = model.num_states, model.num_ages
    if m < 1 or n < 1:
        report.violations.append(f"model needs at least one state and one age (got {m}, {n})")
        return report

    if len(model.growth) != m:
        report.violations.append(f"growth has {len(model.growth)} rows, expected {m}")
    for s, row in enumerate(model.growth):
        if len(row) != n or any(g not in (0, 1) for g in row):
            report.violations.append(f"state {s}: growth vector must be {n} entries of 0/1")

    for k, t in enumerate(model.transitions):
        if not (0 <= t.source < m) or not (0 <= t.target < m):
            report.violations.append(f"transition {k}: dangling state index ({t.source} -> {t.target})")
        if not np.isfinite(t.rate) or t.rate < 0:
            report.violations.append(f"transition {k}: nonpositive rate {t.rate}")
        if len(t.reset) != n:
            report.violations.append(f"transition {k}: reset map has {len(t.reset)} entries, expected {n}")
        for entry in t.reset:
            if entry != ZERO and not (isinstance(entry, (int, np.integer)) and 0 <= entry < n):
                report.violations.append(f"transition {k}: reset entry {entry!r} is not an age index or '{ZERO}'")
                break

    if report.violations:
        return report

    pruned = model.pruned()
    out = pruned.outgoing_rates()
    for s in range(m):
        if out[s] <= 0.0:
            report.violations.append(f"reducible chain: state {s} has no outgoing transition")
    closed = _closed_classes(pruned)
    if len(closed) > 1:
        report.violations.append(f"reducible chain: {len(closed)} closed classes {closed}")
    return report


def _recurrent_states(model):
    closed = _closed_classes(model)
    if len(closed) != 1:
        raise SingularSystem(f"Chain has {len(closed)} closed classes; stationary distribution is not unique")
    return closed[0]


def _dense_solve(matrix, rhs, what):
    cond = np.linalg.cond(matrix)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystem(f"{what} system is singular (condition estimate {cond:.3e})")
    lu, piv = linalg.lu_factor(matrix)
    return linalg.lu_solve((lu, piv), rhs)


def solve_stationary(model):
    """Stationary distribution from the balance equations plus normalization"""
    model = model.pruned()
    recurrent = _recurrent_states(model)
    index = {s: i for i, s in enumerate(recurrent)}
    r = len(recurrent)

    generator = np.zeros((r, r))
    for t in model.transitions:
        if t.source not in index or t.source == t.target:
            continue
        i, j = index[t.source], index[t.target]
        generator[i, j] += t.rate
        generator[i, i] -= t.rate

    system = generator.T.copy()
    system[-1, :] = 1.0
    rhs = np.zeros(r)
    rhs[-1] = 1.0
    probs = np.clip(_dense_solve(system, rhs, 'balance'), 0.0, None)
    probs /= probs.sum()

    full = np.zeros(model.num_states)
    full[recurrent] = probs
    if r < model.num_states:
        logger.debug(f"{model.num_states - r} transient states carry zero stationary mass")
    return StationaryDistribution(full)


def solve_correlations(model, pi):
    """Stationary correlation vectors v[s] = E[x(t) 1{s(t)=s}]"""
    model = model.pruned()
    probs = pi.probs if isinstance(pi, StationaryDistribution) else np.asarray(pi)
    recurrent = _recurrent_states(model)
    index = {s: i for i, s in enumerate(recurrent)}
    n = model.num_ages
    size = len(recurrent) * n

    out = model.outgoing_rates()
    system = np.zeros((size, size))
    rhs = np.zeros(size)
    for s, i in index.items():
        for k in range(n):
            row = i * n + k
            system[row, row] += out[s]
            rhs[row] = model.growth[s][k] * probs[s]

    for t in model.transitions:
        if t.source not in index:
            continue
        i, j = index[t.source], index[t.target]
        for k, entry in enumerate(t.reset):
            if entry != ZERO:
                system[j * n + k, i * n + entry] -= t.rate

    v = _dense_solve(system, rhs, 'correlation').reshape(len(recurrent), n)
    scale = max(np.abs(v).max(), 1.0)
    if v.min() < -1e-9 * scale:
        raise SingularSystem(f"correlation solution has negative entries ({v.min():.3e}); age process is unstable")
    v = np.clip(v, 0.0, None)

    full = np.zeros((model.num_states, n))
    full[recurrent] = v
    return CorrelationVectors(full)


def average_aoi(v):
    """Average AoI: the monitor-age column of the correlation vectors, summed"""
    values = v.v if isinstance(v, CorrelationVectors) else np.asarray(v)
    return float(np.sum(values[:, 0]))


def solve(model):
    """Validate, then solve pi, v and the average AoI"""
    report = validate_model(model)
    if report:
        if any(msg.startswith('reducible') for msg in report.violations):
            raise SingularSystem('; '.join(report.violations))
        raise InvalidParams('; '.join(report.violations))
    pi = solve_stationary(model)
    v = solve_correlations(model, pi)
    return AoiSolution(pi=pi, v=v, delta=average_aoi(v))


def balance_residual(model, pi):
    """max_s |pi_s * out_s - inflow_s|"""
    model = model.pruned()
    probs = pi.probs if isinstance(pi, StationaryDistribution) else np.asarray(pi)
    inflow = np.zeros(model.num_states)
    for t in model.transitions:
        inflow[t.target] += t.rate * probs[t.source]
    return float(np.max(np.abs(probs * model.outgoing_rates() - inflow)))


def correlation_residual(model, pi, v):
    """Largest violation of the correlation equations over all states and ages"""
    model = model.pruned()
    probs = pi.probs if isinstance(pi, StationaryDistribution) else np.asarray(pi)
    values = v.v if isinstance(v, CorrelationVectors) else np.asarray(v)
    lhs = values * model.outgoing_rates()[:, None]
    rhs = np.array(model.growth, dtype=float) * probs[:, None]
    for t in model.transitions:
        rhs[t.target] += t.rate * t.copy_ages(values[t.source])
    return float(np.max(np.abs(lhs - rhs)))
