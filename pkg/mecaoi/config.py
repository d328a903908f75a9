"""Experiment configuration: defaults, JSON file, environment and --set overrides."""
import copy
import json
import logging
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .des_sim import SimConfig
from .errors import InvalidConfig, InvalidParams, MecAoiError
from .mec_model import COST_PAIRINGS, DeviceParams, Policy
from .mfe_solver import AlgoConfig, OptConfig, TypeSet

logger = logging.getLogger('mecaoi.config')

MODES = ('aoi', 'simulate', 'mfe', 'nash', 'sweep')

DEFAULT_CONFIG = {
    'types': [
        {'type_id': 'generic', 'arrival_rate': 2.5, 'eta': 5.0, 'V': 10.0,
         'P_max': 1.0, 'f_max': 0.3, 'weight': 1.0},
    ],
    'mu3': 1.0,
    'N': 1,
    'rho': 0.0,
    'policy': {'p_local': 0.5, 'mu_local': 0.3, 'mu_tx': 1.0},
    'cost_pairing': 'physical',
    'opt': {'grid_points_per_axis': 7, 'refine_tolerance': 1e-8, 'max_refine_iters': 4000, 'starts': 3},
    'algo': {'gamma': 0.5, 'epsilon': 1e-6, 'max_iters': 500, 'rho0': 0.0},
    'sim': {'horizon': 10000.0, 'warmup_fraction': 0.2, 'replications': 20, 'master_seed': 1},
    'sweep': None,
    'nash': {'max_sweeps': 50, 'exploitability_N': []},
    'workers': 1,
    'output': 'results',
}

# environment variables (usually from .env) consulted before the config file
ENV_KEYS = {
    'MECAOI_OUTPUT_DIR': 'output',
    'MECAOI_WORKERS': 'workers',
}


def merge(base, loaded):
    """Recursive {**base, **loaded}"""
    merged = dict(base)
    for key, value in loaded.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_value(text):
    """JSON literal if it parses, plain string otherwise"""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _walk(config, path, create=False):
    node = config
    parts = path.split('.')
    for part in parts[:-1]:
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                raise InvalidConfig(f"'{path}' does not address a config entry")
        elif isinstance(node, dict):
            if part not in node or node[part] is None:
                if not create:
                    raise InvalidConfig(f"'{path}' does not address a config entry")
                node[part] = {}
            node = node[part]
        else:
            raise InvalidConfig(f"'{path}' does not address a config entry")
    return node, parts[-1]


def get_path(config, path):
    node, last = _walk(config, path)
    try:
        return node[int(last)] if isinstance(node, list) else node[last]
    except (KeyError, ValueError, IndexError):
        raise InvalidConfig(f"'{path}' does not address a config entry")


def set_path(config, path, value):
    node, last = _walk(config, path, create=True)
    if isinstance(node, list):
        try:
            node[int(last)] = value
        except (ValueError, IndexError):
            raise InvalidConfig(f"'{path}' does not address a config entry")
    else:
        node[last] = value


def apply_overrides(config, overrides):
    """Apply 'key=value' strings on a copy of config"""
    config = copy.deepcopy(config)
    for item in overrides:
        if '=' not in item:
            raise InvalidConfig(f"override '{item}' is not of the form key=value")
        key, text = item.split('=', 1)
        set_path(config, key.strip(), parse_value(text))
    return config


def apply_axis(config, axis, value):
    """Set one sweep axis value; 'arrival_rate' moves every type at once"""
    config = copy.deepcopy(config)
    if axis == 'arrival_rate':
        for entry in config['types']:
            entry['arrival_rate'] = value
    else:
        get_path(config, axis)
        set_path(config, axis, value)
    return config


def load_config(path=None):
    """Defaults, then environment, then the JSON file"""
    config = copy.deepcopy(DEFAULT_CONFIG)
    for env_key, key in ENV_KEYS.items():
        value = os.getenv(env_key)
        if value:
            config[key] = value if key == 'output' else parse_value(value)
    if path is None:
        return config
    try:
        with open(path, 'r') as f:
            loaded = json.load(f)
    except OSError as e:
        raise InvalidConfig(f"cannot read config file {path}: {e}")
    except json.JSONDecodeError as e:
        raise InvalidConfig(f"config file is not valid JSON: {e}")
    if not isinstance(loaded, dict):
        raise InvalidConfig("config document must be a JSON object")
    return merge(config, loaded)


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    target: str


@dataclass
class ExperimentConfig:
    mode: str
    types: TypeSet
    mu3: float
    N: int
    rho: float
    policy: Policy
    cost_pairing: str
    opt: OptConfig
    algo: AlgoConfig
    sim: SimConfig
    sweep: SweepSpec
    nash: dict
    workers: int
    output: Path
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def params(self):
        """First (or only) device type"""
        return self.types.types[0]


def _number(value, kind, name):
    """Coerce a JSON number to int or float; strings and flags are rejected"""
    if isinstance(value, bool) or not isinstance(value, (int, float)) or (kind is int and not math.isfinite(value)):
        raise InvalidConfig(f"'{name}' must be a number (got {value!r})")
    if kind is int:
        if float(value) != int(value):
            raise InvalidConfig(f"'{name}' must be an integer (got {value!r})")
        return int(value)
    return float(value)


def _section(cls, data, name, **extra):
    if not isinstance(data, dict):
        raise InvalidConfig(f"'{name}' must be an object (got {data!r})")
    data = {**data, **extra}
    kinds = {f.name: f.type for f in fields(cls)}
    unknown = sorted(set(data) - set(kinds))
    if unknown:
        raise InvalidConfig(f"bad '{name}' section: unknown fields {unknown}")
    values = {}
    for key, value in data.items():
        if kinds[key] in (int, float):
            values[key] = _number(value, kinds[key], f'{name}.{key}')
        elif value is not None and not isinstance(value, kinds[key]):
            raise InvalidConfig(f"'{name}.{key}' must be a {kinds[key].__name__} (got {value!r})")
        else:
            values[key] = value
    return cls(**values)


def _nash_section(data):
    if not isinstance(data, dict):
        raise InvalidConfig(f"'nash' must be an object (got {data!r})")
    max_sweeps = _number(data.get('max_sweeps', 50), int, 'nash.max_sweeps')
    ladder = data.get('exploitability_N') or []
    if not isinstance(ladder, list):
        raise InvalidConfig(f"'nash.exploitability_N' must be a list (got {ladder!r})")
    ladder = [_number(n, int, 'nash.exploitability_N') for n in ladder]
    if max_sweeps < 1 or any(n < 1 for n in ladder):
        raise InvalidConfig("nash.max_sweeps and every exploitability N must be at least 1")
    return {'max_sweeps': max_sweeps, 'exploitability_N': ladder}


def build_experiment(mode, raw):
    """Validate a resolved config dict into an ExperimentConfig"""
    if mode not in MODES:
        raise InvalidConfig(f"unknown mode '{mode}' (expected one of {', '.join(MODES)})")
    try:
        entries = raw['types']
        types = TypeSet.normalized(
            [
                DeviceParams(
                    arrival_rate=float(e['arrival_rate']),
                    eta=float(e['eta']),
                    V=float(e['V']),
                    P_max=float(e['P_max']),
                    f_max=float(e['f_max']),
                    type_id=str(e.get('type_id', f'type{k}')),
                )
                for k, e in enumerate(entries)
            ],
            [float(e.get('weight', 1.0)) for e in entries],
        )
        policy = Policy(**{k: float(v) for k, v in raw['policy'].items()})
        mu3 = float(raw['mu3'])
        N = int(raw['N'])
        rho = float(raw['rho'])
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        if isinstance(e, MecAoiError):
            raise
        raise InvalidConfig(f"malformed model parameters: {e}")

    if not mu3 > 0:
        raise InvalidParams(f"mu3 must be positive (got {mu3})")
    if N < 1:
        raise InvalidParams(f"N must be at least 1 (got {N})")
    if rho < 0:
        raise InvalidParams(f"rho must be nonnegative (got {rho})")
    if not 0.0 <= policy.p_local <= 1.0 or policy.mu_local <= 0 or policy.mu_tx <= 0:
        raise InvalidParams(f"policy out of range: {policy}")
    if raw['cost_pairing'] not in COST_PAIRINGS:
        raise InvalidConfig(f"cost_pairing must be one of {COST_PAIRINGS}")

    workers = _number(raw.get('workers', 1), int, 'workers')
    if workers < 1:
        raise InvalidConfig(f"workers must be at least 1 (got {workers})")
    opt = _section(OptConfig, raw['opt'], 'opt')
    algo = _section(AlgoConfig, raw['algo'], 'algo', workers=workers)
    sim = _section(SimConfig, raw['sim'], 'sim', workers=workers)
    opt.validate()
    algo.validate()
    sim.validate()

    sweep = None
    if raw.get('sweep'):
        spec = raw['sweep']
        if not isinstance(spec, dict):
            raise InvalidConfig(f"'sweep' must be an object (got {spec!r})")
        axis = spec.get('axis')
        values = spec.get('values') or []
        if not axis or not isinstance(axis, str) or not values:
            raise InvalidConfig("sweep needs an 'axis' and a non-empty 'values' list")
        if axis not in ('rho', 'arrival_rate'):
            get_path(raw, axis)
        target = spec.get('target') or ('best_policy' if axis == 'rho' else 'mfe')
        if target not in ('best_policy', 'mfe'):
            raise InvalidConfig(f"sweep target must be 'best_policy' or 'mfe' (got {target!r})")
        if target == 'best_policy' and axis != 'rho':
            raise InvalidConfig("best_policy sweeps run over the 'rho' axis")
        if not isinstance(values, list):
            raise InvalidConfig(f"sweep values must be a list (got {values!r})")
        values = tuple(_number(v, float, 'sweep.values') for v in values)
        sweep = SweepSpec(axis=axis, values=values, target=target)

    nash = _nash_section(raw.get('nash') or {})
    if not isinstance(raw['output'], str):
        raise InvalidConfig(f"output must be a path string (got {raw['output']!r})")
    return ExperimentConfig(
        mode=mode,
        types=types,
        mu3=mu3,
        N=N,
        rho=rho,
        policy=policy,
        cost_pairing=raw['cost_pairing'],
        opt=opt,
        algo=algo,
        sim=sim,
        sweep=sweep,
        nash=nash,
        workers=workers,
        output=Path(raw['output']),
        raw=raw,
    )


def resolve(mode, path=None, overrides=(), output=None, seed=None):
    """Full precedence chain: defaults < environment < file < command line"""
    config = load_config(path)
    config = apply_overrides(config, overrides)
    if output is not None:
        config['output'] = str(output)
    if seed is not None:
        config['sim']['master_seed'] = int(seed)
    return build_experiment(mode, config)
