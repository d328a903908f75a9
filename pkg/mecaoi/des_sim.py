"""Discrete-event simulation of the LCFS-preemptive offloading network.

Every server (transmitter, local processor, edge server) holds at most one
packet; an arriving packet preempts and discards the one in service.  A
transmitter completion hands its packet to the ES.  Local or ES completion of
a device's packet refreshes that device's age; exogenous (class 2) packets
are dropped on completion.  The age sawtooth is integrated exactly between
events.
"""
import csv
import heapq
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import InvalidConfig

logger = logging.getLogger('mecaoi.des_sim')

CONFIDENCE = 0.99
TRACE_COLUMNS = ['t', 'event_type', 'server', 'class', 'device_age']

ARRIVAL = 0
EXO_ARRIVAL = 1
COMPLETION = 2


@dataclass(frozen=True)
class SimConfig:
    horizon: float = 1e4
    warmup_fraction: float = 0.2
    replications: int = 20
    master_seed: int = 1
    workers: int = 1
    trace_dir: str = None

    def validate(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise InvalidConfig(f"horizon must be positive (got {self.horizon})")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise InvalidConfig(f"warmup_fraction must lie in [0, 1) (got {self.warmup_fraction})")
        if self.replications < 1:
            raise InvalidConfig(f"replications must be at least 1 (got {self.replications})")
        if self.workers < 1:
            raise InvalidConfig(f"workers must be at least 1 (got {self.workers})")


@dataclass(frozen=True)
class AoiEstimate:
    mean: float
    ci_half_width: float
    events: int
    replication_means: tuple = field(default=(), repr=False)
    arrivals: int = 0
    deliveries: int = 0


class _Stream:
    """PCG64 stream that hands out exponentials and uniforms from pre-drawn blocks"""

    def __init__(self, seed_seq, block=4096):
        self.rng = np.random.Generator(np.random.PCG64(seed_seq))
        self.block = block
        self._exp = self.rng.standard_exponential(block)
        self._uni = self.rng.random(block)
        self._ie = 0
        self._iu = 0

    def exponential(self, rate):
        if self._ie == self.block:
            self._exp = self.rng.standard_exponential(self.block)
            self._ie = 0
        value = self._exp[self._ie]
        self._ie += 1
        return value / rate

    def uniform(self):
        if self._iu == self.block:
            self._uni = self.rng.random(self.block)
            self._iu = 0
        value = self._uni[self._iu]
        self._iu += 1
        return value


class _Server:
    __slots__ = ('name', 'device', 'rate', 'stream', 'packet', 'token')

    def __init__(self, name, device, rate, stream):
        self.name = name
        self.device = device
        self.rate = rate
        self.stream = stream
        self.packet = None
        self.token = 0


class _Network:
    """One replication of N devices sharing a single LCFS-P edge server"""

    def __init__(self, policies, lambdas, es_rate, exo_rate, seed_seq, trace_path=None):
        n = len(policies)
        streams = [_Stream(s) for s in seed_seq.spawn(n + 2)]
        self.policies = policies
        self.lambdas = lambdas
        self.device_streams = streams[:n]
        self.exo_stream = streams[n + 1]
        self.exo_rate = exo_rate
        self.tx = [_Server('T', j, p.mu_tx, streams[j]) for j, p in enumerate(policies)]
        self.local = [_Server('L', j, p.mu_local, streams[j]) for j, p in enumerate(policies)]
        self.es = _Server('ES', None, es_rate, streams[n])
        self.queue = []
        self.seq = 0
        self.gen = np.zeros(n)
        self.since = np.zeros(n)
        self.area = np.zeros(n)
        self.arrivals = np.zeros(n, dtype=np.int64)
        self.deliveries = np.zeros(n, dtype=np.int64)
        self.events = 0
        self.warmup = 0.0
        self.trace_path = trace_path
        self._trace = None

    def _push(self, t, kind, payload):
        self.seq += 1
        heapq.heappush(self.queue, (t, self.seq, kind, payload))

    def _place(self, server, packet, t):
        server.packet = packet
        server.token += 1
        self._push(t + server.stream.exponential(server.rate), COMPLETION, (server, server.token))

    def _accumulate(self, j, t):
        start = max(self.since[j], self.warmup)
        if t > start:
            g = self.gen[j]
            self.area[j] += 0.5 * ((t - g) ** 2 - (start - g) ** 2)
        self.since[j] = t

    def _deliver(self, j, gen_time, t):
        self.deliveries[j] += 1
        if gen_time > self.gen[j]:
            self._accumulate(j, t)
            self.gen[j] = gen_time

    def _log(self, t, event_type, server, cls, device):
        if self._trace is not None:
            age = '' if device is None else repr(float(t - self.gen[device]))
            self._trace.writerow([repr(float(t)), event_type, server, cls, age])

    def run(self, horizon, warmup):
        self.warmup = warmup
        handle = None
        if self.trace_path is not None:
            handle = open(self.trace_path, 'w', newline='')
            self._trace = csv.writer(handle, lineterminator='\n')
            self._trace.writerow(TRACE_COLUMNS)
        try:
            for j, lam in enumerate(self.lambdas):
                self._push(self.device_streams[j].exponential(lam), ARRIVAL, j)
            if self.exo_rate > 0:
                self._push(self.exo_stream.exponential(self.exo_rate), EXO_ARRIVAL, None)
            self._loop(horizon)
        finally:
            if handle is not None:
                handle.close()
        for j in range(len(self.lambdas)):
            self._accumulate(j, horizon)
        return self.area / (horizon - warmup)

    def _loop(self, horizon):
        while self.queue:
            t, _, kind, payload = heapq.heappop(self.queue)
            if t > horizon:
                break
            if kind == ARRIVAL:
                j = payload
                self.events += 1
                self.arrivals[j] += 1
                stream = self.device_streams[j]
                self._push(t + stream.exponential(self.lambdas[j]), ARRIVAL, j)
                server = self.local[j] if stream.uniform() < self.policies[j].p_local else self.tx[j]
                self._place(server, (j, t), t)
                self._log(t, 'arrival', server.name, 1, j)
            elif kind == EXO_ARRIVAL:
                self.events += 1
                self._push(t + self.exo_stream.exponential(self.exo_rate), EXO_ARRIVAL, None)
                self._place(self.es, None, t)
                self._log(t, 'arrival', 'ES', 2, None)
            else:
                server, token = payload
                if token != server.token:
                    continue
                self.events += 1
                packet = server.packet
                server.packet = None
                if server.name == 'T':
                    self._place(self.es, packet, t)
                    self._log(t, 'handoff', 'T', 1, packet[0])
                elif packet is None:
                    self._log(t, 'departure', 'ES', 2, None)
                else:
                    j, gen_time = packet
                    self._deliver(j, gen_time, t)
                    self._log(t, 'delivery', server.name, 1, j)


def _run_replication(job):
    policies, lambdas, es_rate, exo_rate, horizon, warmup, seed_seq, trace_path = job
    net = _Network(policies, lambdas, es_rate, exo_rate, seed_seq, trace_path)
    averages = net.run(horizon, warmup)
    return averages, net.events, net.arrivals, net.deliveries


def _replicate(policies, lambdas, es_rate, exo_rate, cfg):
    cfg.validate()
    seeds = np.random.SeedSequence(cfg.master_seed).spawn(cfg.replications)
    warmup = cfg.warmup_fraction * cfg.horizon
    trace_dir = Path(cfg.trace_dir) if cfg.trace_dir else None
    if trace_dir is not None:
        trace_dir.mkdir(parents=True, exist_ok=True)
    jobs = [
        (list(policies), list(lambdas), es_rate, exo_rate, cfg.horizon, warmup, seed,
         str(trace_dir / f'trace_rep{k}.csv') if trace_dir is not None else None)
        for k, seed in enumerate(seeds)
    ]
    if cfg.workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_replication, jobs))
    else:
        results = [_run_replication(job) for job in jobs]
    logger.debug(f"{cfg.replications} replications done, {sum(r[1] for r in results)} events")
    return results


def _estimate(samples, events, arrivals, deliveries):
    samples = np.asarray(samples, dtype=float)
    mean = float(samples.mean())
    if len(samples) < 2:
        logger.warning("Single replication: confidence half-width is unbounded")
        half_width = math.inf
    else:
        quantile = stats.t.ppf(0.5 + CONFIDENCE / 2, len(samples) - 1)
        half_width = float(quantile * samples.std(ddof=1) / math.sqrt(len(samples)))
    return AoiEstimate(
        mean=mean,
        ci_half_width=half_width,
        events=int(events),
        replication_means=tuple(float(x) for x in samples),
        arrivals=int(arrivals),
        deliveries=int(deliveries),
    )


def simulate_device(policy, lam, env, cfg):
    """AoI of one device whose ES also receives Poisson exogenous traffic"""
    results = _replicate([policy], [lam], env.es_rate, env.exo_rate, cfg)
    return _estimate(
        [r[0][0] for r in results],
        sum(r[1] for r in results),
        sum(int(r[2][0]) for r in results),
        sum(int(r[3][0]) for r in results),
    )


def simulate_population(policies, lambdas, sys, cfg):
    """Per-device AoI of the full N-device system with one shared ES"""
    if len(policies) != sys.N or len(lambdas) != sys.N:
        raise InvalidConfig(f"expected {sys.N} policies and rates, got {len(policies)} and {len(lambdas)}")
    results = _replicate(policies, lambdas, sys.es_rate, 0.0, cfg)
    events = sum(r[1] for r in results)
    estimates = []
    for j in range(sys.N):
        estimates.append(_estimate(
            [r[0][j] for r in results],
            events,
            sum(int(r[2][j]) for r in results),
            sum(int(r[3][j]) for r in results),
        ))
    logger.info(f"Simulated N={sys.N} devices over {cfg.replications} replications ({events} events)")
    return estimates


def simulate_occupancy(model, horizon, seed=0, start=0):
    """Long-run fraction of time a CTMC spends in each state (jump simulation)"""
    if not horizon > 0:
        raise InvalidConfig(f"horizon must be positive (got {horizon})")
    model = model.pruned()
    m = model.num_states
    targets = [[] for _ in range(m)]
    weights = [[] for _ in range(m)]
    for t in model.transitions:
        targets[t.source].append(t.target)
        weights[t.source].append(t.rate)
    totals = np.array([sum(w) for w in weights])
    cumulative = [np.cumsum(w) / sum(w) if w else None for w in weights]

    stream = _Stream(np.random.SeedSequence(seed))
    state = start
    occupancy = np.zeros(m)
    now = 0.0
    while now < horizon:
        dwell = stream.exponential(totals[state])
        occupancy[state] += min(dwell, horizon - now)
        now += dwell
        pick = int(np.searchsorted(cumulative[state], stream.uniform(), side='right'))
        state = targets[state][min(pick, len(targets[state]) - 1)]
    return occupancy / horizon
