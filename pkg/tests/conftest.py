from pathlib import Path

import pytest

from mecaoi.mec_model import DeviceParams, EsEnvironment, Policy
from mecaoi.mfe_solver import OptConfig
from mecaoi.shs_engine import ShsModel, Transition, ZERO, load_gallery

GALLERY_DIR = Path(__file__).resolve().parents[1] / 'data' / 'gallery'


def mm1_lcfs(lam, mu):
    """Always-busy LCFS-P M/M/1 server (fake updates): ages (monitor, server)"""
    return ShsModel(
        num_states=1,
        num_ages=2,
        transitions=[
            Transition(0, 0, lam, (0, ZERO)),
            Transition(0, 0, mu, (1, 1)),
        ],
        growth=[(1, 1)],
    )


@pytest.fixture
def base_params():
    return DeviceParams(arrival_rate=2.5, eta=5.0, V=10.0, P_max=1.0, f_max=0.3)


@pytest.fixture
def low_eta_params():
    return DeviceParams(arrival_rate=2.5, eta=0.5, V=10.0, P_max=1.0, f_max=0.3)


@pytest.fixture
def base_policy():
    return Policy(p_local=0.5, mu_local=0.3, mu_tx=1.0)


@pytest.fixture
def base_env():
    return EsEnvironment.finite(1.0, 10.0)


@pytest.fixture
def gallery():
    return load_gallery(GALLERY_DIR)


@pytest.fixture
def quick_opt():
    """Coarse optimizer settings for tests that run many SHS-based best responses"""
    return OptConfig(grid_points_per_axis=3, refine_tolerance=1e-6, max_refine_iters=300, starts=1)


@pytest.fixture
def mm1():
    return mm1_lcfs
