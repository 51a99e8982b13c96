import os

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
os.environ.setdefault("ETC_DIR", os.path.join(ROOT, "etc"))
os.environ.setdefault("VERBOSE_LOGGING", "false")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from hoil.utils.core.logging import clear_warnings  # noqa: E402

TOY_CONFIG = os.path.join(ROOT, "etc", "config", "toy.json")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: toy-scale training experiments and whole-model gradient checks")


@pytest.fixture(autouse=True)
def _fresh_warnings(monkeypatch):
    monkeypatch.delenv("HOIL_SEED", raising=False)
    clear_warnings()
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_config_path():
    return TOY_CONFIG


@pytest.fixture(scope="session")
def toy_config():
    from hoil.utils.core.run_config import load_run_config
    return load_run_config(TOY_CONFIG)


@pytest.fixture(scope="session")
def test_scene():
    from hoil.utils.sim.lidar import make_test_scene
    return make_test_scene()


@pytest.fixture(scope="session")
def toy_sequence(tmp_path_factory):
    """Four simulated frames written with the toy config."""
    from hoil.utils.core.simulate_logic import handle_simulate
    out = str(tmp_path_factory.mktemp("seq") / "toy")
    message, code = handle_simulate(TOY_CONFIG, 4, out, workers=2)
    assert code == 0, message
    return out


def unit_rows(rng, m, d):
    z = rng.standard_normal((m, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)
