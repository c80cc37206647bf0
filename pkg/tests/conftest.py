import numpy as np
import pytest

from sto_engine import config as settings
from sto_engine.dynamics import circle_maps
from sto_engine.dynamics.fibered import make_profile, sinusoid
from sto_engine.dynamics.graphon import BlockGraphon, ConstantGraphon, translation_graphon


@pytest.fixture
def doubling():
    return circle_maps.linear_map(2)


@pytest.fixture
def perturbed():
    return circle_maps.perturbed_linear_map(2, 0.3)


@pytest.fixture
def h1():
    return circle_maps.coupling_h1()


@pytest.fixture
def h_zero():
    return circle_maps.coupling_zero()


@pytest.fixture
def constant_half():
    return ConstantGraphon(0.5)


@pytest.fixture
def block():
    return BlockGraphon((0.5,), np.array([[1.0, 0.2], [0.2, 0.5]]))


@pytest.fixture
def decay():
    return translation_graphon("linear")


@pytest.fixture
def wavy():
    """Small fibered state with z-dependent phase."""
    return make_profile(8, 64, lambda z: sinusoid(0.5, 0.25 * z))


@pytest.fixture
def ledger(tmp_path, monkeypatch):
    path = tmp_path / "runs.db"
    monkeypatch.setattr(settings, "DB_PATH", path)
    return path


@pytest.fixture
def small_config(tmp_path, ledger):
    """Desk-scale config: coarse grids, few trials."""
    config = settings.ExperimentConfig(
        graphon="constant",
        p=0.5,
        nz=4,
        nx=64,
        tol=1e-9,
        max_iter=200,
        probes=["expansion", "distortion", "ulam_oracle"],
        probe_params={"ulam_trials": 5},
        N_list=[50, 200],
        t=1,
        R=200,
        z_stars=[0.5],
        concentration_N=50,
        concentration_R=400,
        out_dir=str(tmp_path / "out"),
    )
    return settings.validate(config)


@pytest.fixture
def tripling():
    return circle_maps.linear_map(3)
